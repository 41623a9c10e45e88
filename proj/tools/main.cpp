#include <string>
#include <vector>

#include "cityfm/cli.hpp"

int main(int argc, char** argv) {
  return cityfm::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
