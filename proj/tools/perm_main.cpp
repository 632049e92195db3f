// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "perm/cli/commands.hpp"

int main(int argc, char** argv) { return perm::cli::run_cli(argc, argv, std::cout, std::cerr); }
