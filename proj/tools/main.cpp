#include "inhom/cli.hpp"

int main(int argc, char** argv) { return inhom::cli::dispatch(argc, argv); }
