#include "aiv/cli.hpp"

int main(int argc, char** argv) { return aiv::run_cli(argc, argv); }
