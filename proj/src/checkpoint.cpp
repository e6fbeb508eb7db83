#include "egomg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>

#include "egomg/io_util.hpp"

namespace egomg {

namespace {

constexpr std::string_view kHeader = "EGO-OMG-CKPT v1";

void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out += static_cast<char>(bits & 0xff);
    bits >>= 8;
  }
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

bool clean_field(std::string_view s) {
  return !s.empty() && s.find_first_of("\t\n\r") == std::string_view::npos;
}

}  // namespace

void Checkpoint::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

std::optional<std::string> Checkpoint::get(std::string_view key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::string& Checkpoint::require(std::string_view key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw std::runtime_error("checkpoint is missing metadata '" + std::string(key) + "'");
}

void Checkpoint::put(const std::string& name, Matrix m) {
  for (auto& [n, t] : tensors) {
    if (n == name) {
      t = std::move(m);
      return;
    }
  }
  tensors.emplace_back(name, std::move(m));
}

const Matrix* Checkpoint::find_tensor(std::string_view name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Matrix& Checkpoint::tensor(std::string_view name) const {
  if (const Matrix* m = find_tensor(name)) return *m;
  throw std::runtime_error("checkpoint is missing tensor '" + std::string(name) + "'");
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (!clean_field(k) || v.find_first_of("\t\n\r") != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata may not contain tabs or newlines: " + k);
    }
    out += "meta\t" + k + '\t' + v + '\n';
  }
  for (const auto& [name, m] : ckpt.tensors) {
    if (!clean_field(name)) throw std::invalid_argument("bad tensor name '" + name + "'");
    out += "tensor\t" + name + '\t' + std::to_string(m.rows) + '\t' + std::to_string(m.cols) + '\n';
    for (double v : m.data) append_le(out, v);
    out += '\n';
  }
  out += "checksum\t" + to_hex64(fnv1a64(out)) + '\n';
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source) {
  std::size_t pos = 0;
  std::size_t line = 0;
  auto read_line = [&]() -> std::string_view {
    auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw ParseError(source, line + 1, "truncated checkpoint");
    auto l = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    ++line;
    return l;
  };

  auto head = read_line();
  if (head != kHeader) {
    if (head.starts_with("EGO-OMG-CKPT")) throw ParseError(source, 1, "unsupported checkpoint version '" + std::string(head) + "'");
    throw ParseError(source, 1, "missing EGO-OMG-CKPT header");
  }

  Checkpoint ckpt;
  while (true) {
    const std::size_t line_start = pos;
    auto l = read_line();
    auto f = split(l, '\t');
    if (f[0] == "meta") {
      if (f.size() != 3) throw ParseError(source, line, "meta line needs key and value");
      ckpt.meta.emplace_back(f[1], f[2]);
    } else if (f[0] == "tensor") {
      if (f.size() != 4) throw ParseError(source, line, "tensor line needs name, rows, cols");
      auto rows = parse_int(f[2]);
      auto cols = parse_int(f[3]);
      if (!rows || !cols || *rows < 0 || *cols < 0) throw ParseError(source, line, "bad tensor shape");
      Matrix m(static_cast<std::size_t>(*rows), static_cast<std::size_t>(*cols));
      const std::size_t n = m.size() * 8;
      if (bytes.size() < pos + n + 1) throw ParseError(source, line, "truncated tensor payload for '" + std::string(f[1]) + "'");
      for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = read_le(bytes.data() + pos + i * 8);
      pos += n;
      if (bytes[pos] != '\n') throw ParseError(source, line, "tensor payload for '" + std::string(f[1]) + "' has wrong length");
      ++pos;
      ckpt.tensors.emplace_back(std::string(f[1]), std::move(m));
    } else if (f[0] == "checksum") {
      if (f.size() != 2) throw ParseError(source, line, "bad checksum line");
      if (to_hex64(fnv1a64(bytes.substr(0, line_start))) != f[1]) throw ParseError(source, line, "checksum mismatch");
      if (pos != bytes.size()) throw ParseError(source, line, "trailing bytes after checksum");
      return ckpt;
    } else {
      throw ParseError(source, line, "unexpected record '" + std::string(f[0]) + "'");
    }
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path), path.string());
}

}  // namespace egomg
