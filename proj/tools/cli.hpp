#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "powerlab/api.hpp"

namespace powerlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitMismatch = 1;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitCorpus = 3;
inline constexpr int kExitUnreachable = 4;

/// Runs one command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

/// key=value lines of a JSON object: nested objects become dotted keys and
/// arrays are comma-joined.
std::string flatten(const api::Json& j);

}  // namespace powerlab::cli
