#include "ssql/cli.hpp"

int main(int argc, char** argv) { return ssql::cli::run_cli(argc, argv); }
