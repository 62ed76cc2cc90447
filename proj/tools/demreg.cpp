#include "demreg/cli.hpp"

int main(int argc, char** argv) { return demreg::cli::run(argc, argv); }
