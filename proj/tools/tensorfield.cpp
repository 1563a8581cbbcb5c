#include "tensorfield/cli.hpp"

int main(int argc, char** argv) { return tensorfield::cli::run(argc, argv); }
