#include "skelmae/cli.hpp"

int main(int argc, char** argv) { return skelmae::cli::run(argc, argv); }
