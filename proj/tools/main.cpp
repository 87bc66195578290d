#include "aphi/cli.hpp"

int main(int argc, char** argv) { return aphi::run(argc, argv); }
