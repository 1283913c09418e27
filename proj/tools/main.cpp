#include "cli.hpp"

int main(int argc, char** argv) { return fracdiff::cli::main_entry(argc, argv); }
