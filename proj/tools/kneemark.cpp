#include "kneemark/cli.hpp"

int main(int argc, char** argv) { return kneemark::run_cli(argc, argv); }
