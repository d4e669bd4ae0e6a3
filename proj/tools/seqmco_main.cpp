#include "seqmco/cli.hpp"

int main(int argc, char** argv) { return seqmco::run_cli(argc, argv); }
