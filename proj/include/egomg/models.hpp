#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "egomg/autodiff.hpp"
#include "egomg/checkpoint.hpp"
#include "egomg/matrix.hpp"

namespace egomg {

enum class Aggregation { Lstm, Mean, Terminal };

std::string to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view s);

struct ModelConfig {
  std::size_t input_dim = 0;  // node feature width m
  std::size_t gcn_hidden = 256;
  std::size_t embed_dim = 128;
  std::size_t lstm_hidden = 128;
  std::size_t num_actions = 0;
  Aggregation aggregation = Aggregation::Lstm;
  bool use_gcn = true;

  /// Width of the vector the anticipation head sees.
  std::size_t aggregate_dim() const { return aggregation == Aggregation::Lstm ? lstm_hidden : embed_dim; }
  /// Without the GCN, raw features are projected only when their width differs from embed_dim.
  bool needs_projection() const { return !use_gcn && input_dim != embed_dim; }

  void write(Checkpoint& ckpt) const;
  static ModelConfig read(const Checkpoint& ckpt);
};

/// Ordered named parameter matrices.
class ParameterSet {
 public:
  Matrix& add(const std::string& name, Matrix value);
  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<std::pair<std::string, Matrix>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Matrix>>& entries() const { return entries_; }
  bool operator==(const ParameterSet&) const = default;

 private:
  std::vector<std::pair<std::string, Matrix>> entries_;
};

/// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) with fan_in = rows.
Matrix init_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

struct GcnParams {
  Matrix w1;  // m x 256
  Matrix w2;  // 256 x 128
};

/// Input (i), forget (f), output (o) and candidate (c) gates: x*W + h*U + b.
struct LstmParams {
  Matrix w_i, u_i, b_i;
  Matrix w_f, u_f, b_f;
  Matrix w_o, u_o, b_o;
  Matrix w_c, u_c, b_c;

  static LstmParams zeros(std::size_t input, std::size_t hidden);
};

/// Affine map followed by softmax; W_g (aggregate -> actions) and W_f (2|A| -> |A|).
struct AffineHead {
  Matrix w;
  Matrix b;
};

// Value-level building blocks --------------------------------------------------

/// H1 = relu(A X W1), H2 = A H1 W2; returns H2.
Matrix gcn_forward(const CsrMatrix& adjacency, const Matrix& features, const GcnParams& params);
/// Sequence is one embedding per row, oldest first.
Matrix aggregate(const Matrix& sequence, Aggregation mode, const LstmParams& lstm);
Matrix anticipate(const Matrix& aggregate, const AffineHead& head);
Matrix fuse(const Matrix& graph_scores, const Matrix& appearance_scores, const AffineHead& head);

// Tape-level building blocks ---------------------------------------------------

struct LstmVars {
  ad::Var w_i, u_i, b_i;
  ad::Var w_f, u_f, b_f;
  ad::Var w_o, u_o, b_o;
  ad::Var w_c, u_c, b_c;
};

ad::Var gcn_forward(const CsrMatrix& adjacency, ad::Var features, ad::Var w1, ad::Var w2);
/// One cell step; returns (h, c).
std::pair<ad::Var, ad::Var> lstm_step(ad::Var x, ad::Var h, ad::Var c, const LstmVars& p);
ad::Var affine(ad::Var x, ad::Var w, ad::Var b);
/// softmax(concat(l2(graph), l2(appearance)) W + b), row-wise.
ad::Var fuse(ad::Var graph_scores, ad::Var appearance_scores, ad::Var w, ad::Var b);

/// Variable-length sequences of rows into an embedding table, oldest first.
struct SequenceBatch {
  std::vector<std::vector<std::size_t>> sequences;

  std::size_t size() const { return sequences.size(); }
  std::size_t max_length() const;
};

/// Padded, masked aggregation of a batch. Every sequence must be non-empty.
ad::Var aggregate_batch(ad::Var table, const SequenceBatch& batch, Aggregation mode, const LstmVars* lstm);

/// The graph stream: node embedding (GCN or raw/projected features), sequence aggregation, W_g.
class GraphStreamModel {
 public:
  GraphStreamModel() = default;
  explicit GraphStreamModel(ModelConfig config);

  /// Fresh parameters drawn from `rng`.
  void initialize(std::mt19937_64& rng);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  using Bound = std::unordered_map<std::string, ad::Var>;
  /// Records every parameter on the tape; names starting with a `frozen` prefix become constants.
  Bound bind(ad::Tape& tape, std::span<const std::string> frozen_prefixes = {}) const;

  /// Node embedding table: graph nodes first, then rows for `extra_features` (states absent from
  /// the graph, embedded as isolated nodes).
  ad::Var embed_nodes(const Bound& p, const CsrMatrix& adjacency, ad::Var features, ad::Var extra_features) const;
  ad::Var aggregate(const Bound& p, ad::Var table, const SequenceBatch& batch) const;
  ad::Var probabilities(const Bound& p, ad::Var aggregate) const;

  /// Inference-only scores (batch x |A|).
  Matrix predict(const CsrMatrix& adjacency, const Matrix& features, const Matrix& extra_features,
                 const SequenceBatch& batch) const;
  /// Embedding table values (no gradients).
  Matrix embedding_table(const CsrMatrix& adjacency, const Matrix& features, const Matrix& extra_features) const;
  Matrix predict_from_table(const Matrix& table, const SequenceBatch& batch) const;

  void save(Checkpoint& ckpt) const;
  static GraphStreamModel load(const Checkpoint& ckpt);

 private:
  ModelConfig config_;
  ParameterSet params_;
};

/// Late-fusion head W_f over L2-normalized stream scores. Starts at zero (uniform output).
class FusionModel {
 public:
  FusionModel() = default;
  explicit FusionModel(std::size_t num_actions);

  std::size_t num_actions() const { return num_actions_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  ad::Var forward(ad::Tape& tape, const Matrix& graph_scores, const Matrix& appearance_scores, ad::Var w, ad::Var b) const;
  Matrix predict(const Matrix& graph_scores, const Matrix& appearance_scores) const;

  void save(Checkpoint& ckpt) const;
  static FusionModel load(const Checkpoint& ckpt);

 private:
  std::size_t num_actions_ = 0;
  ParameterSet params_;
};

}  // namespace egomg
