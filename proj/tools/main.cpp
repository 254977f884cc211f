#include "meteocast/cli.hpp"

int main(int argc, char** argv) { return meteo::run_cli(argc, argv); }
