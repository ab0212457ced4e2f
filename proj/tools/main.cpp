#include "commands.hpp"

int main(int argc, char** argv) { return idapbc::cli::run_cli(argc, argv); }
