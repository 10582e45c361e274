#include "wxhome/cli.hpp"

int main(int argc, char** argv) { return wxhome::cli::run(argc, argv); }
