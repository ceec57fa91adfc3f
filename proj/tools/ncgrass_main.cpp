#include "commands.hpp"

int main(int argc, char** argv) { return ncgrass::cli::run(argc, argv); }
