#include "sse/cli.hpp"

int main(int argc, char** argv) { return sse::run_cli(argc, argv); }
