#include <idflow/cli.hpp>

int main(int argc, char** argv) {
    return idflow::cli::run(argc, argv);
}
