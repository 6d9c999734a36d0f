#include <string>
#include <vector>

#include "hgdc/cli.hpp"

int main(int argc, char** argv) {
  return hgdc::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
