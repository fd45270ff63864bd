#include <iostream>

#include "posefit/cli.hpp"

int main(int argc, char** argv) { return posefit::run_cli(argc, argv, std::cout, std::cerr); }
