#include "asag/cli.hpp"

int main(int argc, char** argv) { return asag::cli::run_main(argc, argv); }
