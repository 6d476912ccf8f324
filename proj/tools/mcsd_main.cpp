#include "mcsd/cli.hpp"

int main(int argc, char** argv) { return mcsd::cli::run(argc, argv); }
