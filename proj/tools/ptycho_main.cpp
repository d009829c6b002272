#include "ptycho/cli.hpp"

int main(int argc, char** argv) { return ptycho::cli::run_cli(argc, argv); }
