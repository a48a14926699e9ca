#include "cli.hpp"

int main(int argc, char** argv) { return depcost::cli::run(argc, argv); }
