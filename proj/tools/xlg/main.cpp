#include "xlg/cli.hpp"

int main(int argc, char** argv) { return xlg::cli::run(argc, argv); }
