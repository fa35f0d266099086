#include "trackplan/cli.hpp"

int main(int argc, char** argv) { return trackplan::cli::run(argc, argv); }
