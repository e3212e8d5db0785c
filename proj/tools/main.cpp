#include "biobench/cli.hpp"

int main(int argc, char** argv) { return biobench::cli_main(argc, argv); }
