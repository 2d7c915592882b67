#include "maskforge/pipeline.hpp"

int main(int argc, char** argv) { return maskforge::run_cli(argc, argv); }
