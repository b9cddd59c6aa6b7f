#include "mkv/cli.hpp"

int main(int argc, char** argv) { return mkv::cli::main(argc, argv); }
