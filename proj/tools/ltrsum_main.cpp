// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/cli.hpp"

int main(int argc, char** argv) { return ltrsum::cli_run(argc, argv); }
