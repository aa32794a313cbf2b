#include "stsb/cli_io.hpp"

int main(int argc, char** argv) { return stsb::run_cli(argc, argv); }
