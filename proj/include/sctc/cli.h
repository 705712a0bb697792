// sctc/cli.h
//
// Copyright 2026 The sctc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sctc {

// Entry point of the sctc tool. args excludes the program name. Returns 0 on
// success, 1 on a runtime failure and 2 on a usage error; failures print one
// diagnostic line to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Worker cap from SCTC_THREADS; 1 when unset or invalid.
std::size_t configured_threads();

}  // namespace sctc
