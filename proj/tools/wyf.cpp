#include "wyf/cli.hpp"

int main(int argc, char** argv) { return wyf::cli::main(argc, argv); }
