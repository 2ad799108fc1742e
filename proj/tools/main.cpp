#include "kelo/cli.hpp"

int main(int argc, char** argv) { return kelo::cli_main(argc, argv); }
