#include "depmt/cli.hpp"

int main(int argc, char** argv) { return depmt::run_cli(argc, argv); }
