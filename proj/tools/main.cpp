#include "beables/cli_io.hpp"

int main(int argc, char** argv) { return beables::cli_main(argc, argv); }
