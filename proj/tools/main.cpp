#include "cli.hpp"

int main(int argc, char** argv) {
  return sensia::cli::run(std::vector<std::string>(argv, argv + argc));
}
