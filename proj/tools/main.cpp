#include "wsglr/cli.hpp"

int main(int argc, char** argv) { return wsglr::cli::run(argc, argv); }
