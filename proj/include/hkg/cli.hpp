#pragma once
// Command-line front end. Subcommands: ingest, synth, learn, eval, analyze,
// predictability, pipeline. Exit codes: 0 success, 1 runtime or I/O error,
// 2 usage error.

#include <iosfwd>
#include <string>
#include <vector>

namespace hkg {

inline constexpr const char* kToolVersion = "hkg 0.1.0";

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);
/// Reads a whole file; throws IoError naming the path.
std::string read_file(const std::string& path);

}  // namespace hkg
