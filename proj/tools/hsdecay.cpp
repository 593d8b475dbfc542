#include "hsdecay/cli.hpp"

int main(int argc, char** argv) { return hsdecay::cli::main(argc, argv); }
