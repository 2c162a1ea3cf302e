#include "sanet/cli.hpp"

int main(int argc, char** argv) { return sanet::cli::main(argc, argv); }
