#include "freshcast/cli/run.hpp"

int main(int argc, char** argv) { return freshcast::cli::run(argc, argv); }
