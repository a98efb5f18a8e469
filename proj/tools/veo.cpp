#include "veo/cli.hpp"

int main(int argc, char **argv) { return veo::cli::run(argc, argv); }
