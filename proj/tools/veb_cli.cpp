#include "veb/harness.hpp"

int main(int argc, char** argv) { return veb::cli_main(argc, argv); }
