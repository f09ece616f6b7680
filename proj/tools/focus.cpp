#include <iostream>

#include "focus/app.hpp"

int main(int argc, char** argv) { return focus::app::cli_main(argc, argv, std::cout, std::cerr); }
