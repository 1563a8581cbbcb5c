#pragma once

#include <stdexcept>
#include <string>

namespace tensorfield {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TENSORFIELD_ERROR(Name)                 \
  class Name : public Error {                   \
   public:                                      \
    explicit Name(const std::string& what)      \
        : Error(#Name ": " + what) {}           \
  }

TENSORFIELD_ERROR(NotPositiveDefinite);
TENSORFIELD_ERROR(DegenerateTensor);
TENSORFIELD_ERROR(InvalidParams);
TENSORFIELD_ERROR(DuplicateLocations);
TENSORFIELD_ERROR(CholeskyFailure);
TENSORFIELD_ERROR(InvalidQ);
TENSORFIELD_ERROR(PlanMismatch);
TENSORFIELD_ERROR(NonpositiveScale);
TENSORFIELD_ERROR(InvalidDof);
TENSORFIELD_ERROR(SingularArgument);
TENSORFIELD_ERROR(DimensionMismatch);
TENSORFIELD_ERROR(RankDeficientDesign);
TENSORFIELD_ERROR(NonFiniteLikelihood);
TENSORFIELD_ERROR(MissingTruth);
TENSORFIELD_ERROR(DegenerateFA);
TENSORFIELD_ERROR(FormatError);

#undef TENSORFIELD_ERROR

}  // namespace tensorfield
