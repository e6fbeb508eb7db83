#include "egomg/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "egomg/io_util.hpp"

namespace egomg {

namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

void accumulate(std::vector<double>& acc, const std::vector<double>& v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

void scale(std::vector<double>& v, double s) {
  for (double& x : v) x *= s;
}

}  // namespace

const std::vector<double>* EmbeddingTable::find(std::string_view token) const {
  auto it = entries.find(std::string(token));
  return it == entries.end() ? nullptr : &it->second;
}

EmbeddingTable parse_embedding_text(std::string_view text, const std::string& source) {
  EmbeddingTable table;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    auto fields = split_ws(raw);
    if (fields.empty()) continue;
    if (fields.size() < 2) throw ParseError(source, line_no, "entry has no vector components");
    const std::size_t dim = fields.size() - 1;
    if (table.dimension == 0) {
      table.dimension = dim;
    } else if (dim != table.dimension) {
      throw ParseError(source, line_no,
                       "dimension mismatch: expected " + std::to_string(table.dimension) + ", got " +
                           std::to_string(dim));
    }
    std::string token(fields[0]);
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::vector<double> vec(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      auto v = parse_double(fields[i + 1]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(source, line_no, "non-numeric component '" + std::string(fields[i + 1]) + "'");
      }
      vec[i] = *v;
    }
    if (!table.entries.emplace(std::move(token), std::move(vec)).second) {
      throw ParseError(source, line_no, "duplicate token '" + std::string(fields[0]) + "'");
    }
  }
  return table;
}

EmbeddingTable parse_embedding_file(const std::filesystem::path& path) {
  return parse_embedding_text(read_file(path), path.string());
}

std::string format_embeddings(const EmbeddingTable& table) {
  std::vector<const std::string*> tokens;
  for (const auto& [tok, vec] : table.entries) tokens.push_back(&tok);
  std::sort(tokens.begin(), tokens.end(), [](auto* a, auto* b) { return *a < *b; });
  std::string out;
  for (const auto* tok : tokens) {
    out += *tok;
    for (double v : table.entries.at(*tok)) out += ' ' + format_double(v);
    out += '\n';
  }
  return out;
}

std::vector<double> noun_features(std::string_view noun, const EmbeddingTable& table) {
  std::vector<double> acc(table.dimension, 0.0);
  auto parts = split(noun, ':');
  for (auto part : parts) {
    if (const auto* v = table.find(part)) accumulate(acc, *v);
  }
  scale(acc, 1.0 / static_cast<double>(parts.size()));
  return acc;
}

std::vector<double> state_features(const ManipulationState& state, const Vocabulary& vocab,
                                   const EmbeddingTable& table, const FeatureOptions& options) {
  std::vector<ObjectId> nouns;
  for (const auto& slot : {state.contact_right, state.contact_left, state.anticipated_right, state.anticipated_left}) {
    if (slot) nouns.push_back(*slot);
  }
  if (!options.count_duplicate_nouns) {
    std::sort(nouns.begin(), nouns.end());
    nouns.erase(std::unique(nouns.begin(), nouns.end()), nouns.end());
  }
  std::vector<double> acc(table.dimension, 0.0);
  if (nouns.empty()) return acc;
  for (ObjectId id : nouns) accumulate(acc, noun_features(vocab.noun(id), table));
  scale(acc, 1.0 / static_cast<double>(nouns.size()));
  return acc;
}

std::vector<double> action_features(std::string_view verb, std::string_view noun, const EmbeddingTable& table) {
  auto acc = noun_features(verb, table);
  accumulate(acc, noun_features(noun, table));
  scale(acc, 0.5);
  return acc;
}

Matrix build_feature_matrix(const ActivityGraph& graph, const EmbeddingTable& table, const FeatureOptions& options) {
  Matrix x(graph.node_count(), table.dimension);
  for (std::size_t i = 0; i < graph.state_count(); ++i) {
    auto f = state_features(graph.states[i], graph.objects, table, options);
    std::copy(f.begin(), f.end(), x.row(i).begin());
  }
  for (std::size_t a = 0; a < graph.action_count(); ++a) {
    const int id = static_cast<int>(a);
    auto f = action_features(graph.actions.verb(id), graph.actions.noun(id), table);
    std::copy(f.begin(), f.end(), x.row(graph.action_node(id)).begin());
  }
  return x;
}

Matrix build_identity_features(const ActivityGraph& graph) { return Matrix::identity(graph.node_count()); }

std::string serialize_features(const Matrix& features) {
  std::string out = "EGO-OMG-FEATURES v1\t" + std::to_string(features.rows) + '\t' + std::to_string(features.cols) + '\n';
  for (std::size_t r = 0; r < features.rows; ++r) {
    for (std::size_t c = 0; c < features.cols; ++c) {
      if (c) out += '\t';
      out += format_double(features(r, c));
    }
    out += '\n';
  }
  return out;
}

Matrix deserialize_features(std::string_view text, const std::string& source) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(source, 1, "empty features file");
  auto head = split(lines[0], '\t');
  if (head.size() != 3 || head[0] != "EGO-OMG-FEATURES v1") throw ParseError(source, 1, "bad features header");
  auto rows = parse_int(head[1]);
  auto cols = parse_int(head[2]);
  if (!rows || !cols || *rows < 0 || *cols < 0) throw ParseError(source, 1, "bad features shape");
  if (lines.size() != static_cast<std::size_t>(*rows) + 1) {
    throw ParseError(source, lines.size(), "expected " + std::to_string(*rows) + " feature rows");
  }
  Matrix m(static_cast<std::size_t>(*rows), static_cast<std::size_t>(*cols));
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto f = split(lines[r + 1], '\t');
    if (f.size() != m.cols) throw ParseError(source, r + 2, "wrong column count");
    for (std::size_t c = 0; c < m.cols; ++c) {
      auto v = parse_double(f[c]);
      if (!v || !std::isfinite(*v)) throw ParseError(source, r + 2, "non-numeric feature value");
      m(r, c) = *v;
    }
  }
  return m;
}

}  // namespace egomg
