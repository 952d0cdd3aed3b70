#include "vseg/cli.hpp"

int main(int argc, char** argv) { return vseg::cli::run(argc, argv); }
