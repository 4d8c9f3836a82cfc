#include "cli.hpp"

int main(int argc, char** argv) { return tpp::cli::run(argc, argv); }
