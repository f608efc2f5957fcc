// SPDX-License-Identifier: Apache-2.0
#include "seqtl/cli.hpp"

int main(int argc, char** argv) { return seqtl::run_cli(argc, argv); }
