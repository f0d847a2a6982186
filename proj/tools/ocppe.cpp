#include "ocppe/cli.hpp"

int main(int argc, char** argv) { return ocppe::cli::run(argc, argv); }
