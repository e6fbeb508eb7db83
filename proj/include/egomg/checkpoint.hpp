#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "egomg/matrix.hpp"

namespace egomg {

/// Named tensors plus string metadata.
///
/// File layout: `EGO-OMG-CKPT v1` header, `meta<TAB>key<TAB>value` lines, then per tensor a
/// `tensor<TAB>name<TAB>rows<TAB>cols` line followed by rows*cols little-endian float64 values
/// and a newline, and finally `checksum<TAB>hex` (FNV-1a 64 of everything before it).
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(std::string_view key) const;
  /// Throws std::runtime_error when missing.
  const std::string& require(std::string_view key) const;

  void put(const std::string& name, Matrix m);
  const Matrix* find_tensor(std::string_view name) const;
  const Matrix& tensor(std::string_view name) const;

  bool operator==(const Checkpoint&) const = default;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source = "<checkpoint>");
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace egomg
