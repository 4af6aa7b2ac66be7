#include "cli.hpp"

int main(int argc, char** argv) {
  return ssmnet::cli::run(std::vector<std::string>(argv, argv + argc));
}
