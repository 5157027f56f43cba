#include "mils/cli.hpp"

int main(int argc, char** argv) { return mils::cli::main_entry(argc, argv); }
