#include "dcmwalk/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
  return dcmwalk::cli_main(argc, argv, std::cout, std::cerr);
}
