#include "cli.hpp"

int main(int argc, char** argv) { return voxreg::cli::run(argc, argv); }
