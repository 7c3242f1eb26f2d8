#include "fedcollab/cli.hpp"

int main(int argc, char** argv) { return fedcollab::run_cli(argc, argv); }
