#include "cli.hpp"

int main(int argc, char** argv) { return privdistill::cli::run(argc, argv); }
