#include <string>
#include <vector>

#include "gcpstereo/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return gcps::cli::run(args);
}
