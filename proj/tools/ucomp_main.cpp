#include "ucomp/cli.hpp"

int main(int argc, char** argv) { return ucomp::run_cli(argc, argv); }
