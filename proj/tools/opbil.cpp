#include "opbil/cli.hpp"

int main(int argc, char** argv) { return opbil::cli::run(argc, argv); }
