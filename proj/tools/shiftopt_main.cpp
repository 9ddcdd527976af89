#include "shiftopt/cli.hpp"

int main(int argc, char** argv) { return shiftopt::run_cli(argc, argv); }
