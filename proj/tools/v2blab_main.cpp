#include "v2b/cli.hpp"

int main(int argc, char** argv) { return v2b::cli::run_cli(argc, argv); }
