#include "rs2/cli.hpp"

int main(int argc, char** argv) { return rs2::run_cli(argc, argv); }
