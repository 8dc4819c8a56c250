#include "oscq/cli.hpp"

#include <clocale>

int main(int argc, char** argv) {
    std::setlocale(LC_ALL, "C");  // '.' decimal point in every output file
    return oscq::cli::cli_main(argc, argv);
}
