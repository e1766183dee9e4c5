#include <lexmorl/cli.hpp>

int main(int argc, char** argv) { return lexmorl::cli::run(argc, argv); }
