#include "cli.hpp"

int main(int argc, char** argv) { return coat::cli_main(argc, argv); }
