#include "ais/cli.hpp"

int main(int argc, char** argv) { return ais::cli_main(argc, argv); }
