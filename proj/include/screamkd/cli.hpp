/* Copyright 2026 The ScreamKD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SCREAMKD_CLI_HPP_
#define SCREAMKD_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace screamkd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

// Parses and runs one command. stdout-style output goes to `out`,
// diagnostics and the resolved-config log to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace screamkd::cli

#endif  // SCREAMKD_CLI_HPP_
