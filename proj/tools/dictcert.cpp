#include "dictcert/cli.hpp"

int main(int argc, char** argv) { return dictcert::run(argc, argv); }
