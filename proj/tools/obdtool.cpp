#include "cli.hpp"

int main(int argc, char** argv) { return obdtool::run(argc, argv, std::cin, std::cout, std::cerr); }
