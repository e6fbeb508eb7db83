#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "egomg/trace.hpp"
#include "egomg/training.hpp"

namespace egomg {

/// Bad configuration or command-line usage.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `section.key = value` settings. Every key has a default; unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  /// `#` comments and blank lines allowed; later lines win.
  void load_text(std::string_view text, const std::string& source);
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  const std::string& str(const std::string& key) const;
  /// Empty string when the key holds no path.
  bool has(const std::string& key) const { return !str(key).empty(); }
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  /// train.* settings with run.seed as the seed.
  TrainConfig train_config() const;
  FilterOptions filter_options() const;

  const std::map<std::string, std::string>& values() const { return values_; }
  static const std::vector<std::pair<std::string, std::string>>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace egomg
