// atfm/cli.hpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_CLI_HPP_
#define ATFM_CLI_HPP_

#include <string>
#include <vector>

namespace atfm {

// Runs one CLI invocation (args exclude the program name).
// Exit codes: 0 success, 1 usage/validation, 2 numerical failure, 3 I/O.
int run_cli(const std::vector<std::string>& args);

}  // namespace atfm

#endif  // ATFM_CLI_HPP_
