#include "hypermarg/cli/app.hpp"

int main(int argc, char** argv) { return hypermarg::cli::cli_main(argc, argv); }
