#include "flowuq/commands.hpp"

int main(int argc, char** argv) { return flowuq::cli::main(argc, argv); }
