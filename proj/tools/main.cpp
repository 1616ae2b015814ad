#include "gsavatar/io/cli.hpp"

int main(int argc, char** argv) { return gsavatar::io::run_cli(argc, argv); }
