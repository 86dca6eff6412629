#include "birdsong/cli_app.hpp"

int main(int argc, char** argv) { return birdsong::cli::run(argc, argv); }
