#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "egomg/graph.hpp"
#include "egomg/matrix.hpp"

namespace egomg {

/// Pretrained word vectors, all of one dimension.
struct EmbeddingTable {
  std::size_t dimension = 0;
  std::unordered_map<std::string, std::vector<double>> entries;

  const std::vector<double>* find(std::string_view token) const;
  std::size_t size() const { return entries.size(); }
};

/// `token v1 ... vm` per line. Dimension comes from the first entry.
EmbeddingTable parse_embedding_text(std::string_view text, const std::string& source);
EmbeddingTable parse_embedding_file(const std::filesystem::path& path);
/// Tokens in sorted order, values in shortest round-trip form.
std::string format_embeddings(const EmbeddingTable& table);

struct FeatureOptions {
  /// Count a noun once per slot it occupies instead of once per state.
  bool count_duplicate_nouns = false;
};

/// Mean of the ':'-separated sub-token vectors; unknown sub-tokens count as zero.
std::vector<double> noun_features(std::string_view noun, const EmbeddingTable& table);
std::vector<double> state_features(const ManipulationState& state, const Vocabulary& vocab,
                                   const EmbeddingTable& table, const FeatureOptions& options = {});
std::vector<double> action_features(std::string_view verb, std::string_view noun, const EmbeddingTable& table);

enum class FeatureSource { Embedding, Identity };

/// One row per graph node, in node order.
Matrix build_feature_matrix(const ActivityGraph& graph, const EmbeddingTable& table,
                            const FeatureOptions& options = {});
Matrix build_identity_features(const ActivityGraph& graph);

std::string serialize_features(const Matrix& features);
Matrix deserialize_features(std::string_view text, const std::string& source);

}  // namespace egomg
