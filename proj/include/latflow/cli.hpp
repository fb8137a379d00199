#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace latflow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitResource = 3;
inline constexpr int kExitStatistical = 4;

/// Runs one command line (program name excluded). Artifacts go to
/// --output-dir together with manifest.json; human-readable output to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

std::string version();

} // namespace latflow::cli
