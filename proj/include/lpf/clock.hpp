// Copyright 2026 The LPF Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <cstdint>
#include <string>

namespace lpf {

/// Seconds since the Unix epoch for "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS" with
/// optional fractional seconds and a "Z" or "+HH:MM" suffix. Throws DomainError.
std::int64_t parse_iso8601(const std::string& text);

/// "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(std::int64_t seconds);

std::string now_iso8601();

}  // namespace lpf
