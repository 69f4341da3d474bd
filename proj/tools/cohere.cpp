#include <string>
#include <vector>

#include <cohere/cli.hpp>

int main(int argc, char** argv) {
  return cohere::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
