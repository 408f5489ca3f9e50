#include "evsal/cli.hpp"

int main(int argc, char** argv) { return evsal::run_cli(argc, argv); }
