#include "cqs/cli_io.hpp"

int main(int argc, char** argv) { return cqs::io::run_cli(argc, argv); }
