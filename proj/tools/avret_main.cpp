#include "avret/cli.hpp"

int main(int argc, char** argv) { return avret::cli::run(argc, argv); }
