#include "epiworld/cli.hpp"

int main(int argc, char** argv) { return epiworld::run(argc, argv); }
