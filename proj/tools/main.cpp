#include "fovsr/cli.hpp"

int main(int argc, char** argv) { return fovsr::run_cli(argc, argv); }
