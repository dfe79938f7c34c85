#include "mechid/cli/runner.hpp"

int main(int argc, char** argv) { return mechid::cli::main_entry(argc, argv); }
