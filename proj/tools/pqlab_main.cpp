#include "pqlab/cli.hpp"

int main(int argc, char** argv) { return pqlab::cli::run(argc, argv); }
