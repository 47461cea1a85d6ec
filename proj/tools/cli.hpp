#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "pepsgen/error.hpp"
#include "pepsgen/peps.hpp"
#include "pepsgen/training.hpp"

namespace pepsgen::cli {

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kInputError = 2,
  kFormatError = 3,
  kNumericError = 4,
  kCapacityError = 5,
};

int exit_code_for(ErrorKind k);

/// Flat `section.key = value` configuration. Lines starting with `#` are
/// comments. Unknown keys are rejected.
class RunConfig {
 public:
  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig parse(std::istream& is, const std::string& source);

  /// Applies `key=value`, replacing any earlier value.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  std::optional<std::string> find(const std::string& key) const;
  std::string text(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key, double fallback) const;
  std::size_t count(const std::string& key, std::size_t fallback) const;
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  /// `default`, `exact`, or a positive bond cap.
  ContractionSettings chi(const std::string& key) const;

  std::filesystem::path output_dir() const;
  TrainConfig training() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Runs the command line; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pepsgen::cli
