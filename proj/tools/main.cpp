#include "inverseflow/cli.hpp"

int main(int argc, char** argv) { return inverseflow::cli_dispatch(argc, argv); }
