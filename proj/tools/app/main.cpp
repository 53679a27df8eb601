#include <iostream>

#include "app.hpp"

int main(int argc, char** argv) {
  return geoerasure::app::run(argc, argv, std::cout, std::cerr);
}
