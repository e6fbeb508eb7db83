#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "egomg/checkpoint.hpp"
#include "egomg/graph.hpp"
#include "egomg/models.hpp"
#include "egomg/segments.hpp"

namespace egomg {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrainMode { Joint, TwoStage };
std::string to_string(TrainMode m);
TrainMode parse_train_mode(std::string_view s);

struct TrainConfig {
  TrainMode mode = TrainMode::Joint;
  Aggregation aggregation = Aggregation::Lstm;
  bool use_gcn = true;
  std::size_t gcn_hidden = 256;
  std::size_t embed_dim = 128;
  std::size_t lstm_hidden = 128;
  double learning_rate = 7e-5;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  std::size_t max_sequence_length = 128;
  std::size_t pretrain_epochs = 50;
  double fusion_learning_rate = 0.01;
  std::size_t fusion_batch_size = 16;
  std::size_t fusion_epochs = 30;
  double dropout = 0.0;  // on the aggregate, training only

  void validate() const;
  void write(Checkpoint& ckpt) const;
};

// Optimizer ------------------------------------------------------------------------

struct AdamOptions {
  double learning_rate = 7e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

/// Bias-corrected ADAM update. `grads[i]` pairs with `params.entries()[i]`; null skips the entry.
/// Throws TrainingError on a non-finite gradient.
void adam_step(ParameterSet& params, std::span<const Matrix* const> grads, AdamState& state, const AdamOptions& options);

// Sequence encoding -----------------------------------------------------------------

/// Maps observed state windows to rows of the node-embedding table. States missing from the
/// graph get extra rows (isolated-node treatment); an empty window becomes the null state.
class SequenceEncoder {
 public:
  using FeatureFn = std::function<std::vector<double>(const ManipulationState&)>;

  SequenceEncoder(const ActivityGraph& graph, std::size_t feature_dim, FeatureFn unseen_features,
                  std::size_t max_length);

  std::vector<std::size_t> encode(const StateSequence& window);
  const Matrix& extra_features() const { return extra_; }
  std::size_t unseen_count() const { return extra_.rows; }

 private:
  std::size_t row_for(const ManipulationState& s);

  const ActivityGraph* graph_;
  std::size_t feature_dim_;
  FeatureFn unseen_features_;
  std::size_t max_length_;
  Matrix extra_;
  std::unordered_map<ManipulationState, std::size_t, ManipulationStateHash> extra_index_;
};

struct EncodedSegment {
  std::string segment_id;
  std::vector<std::size_t> nodes;
  std::size_t label = 0;
};

using SequencesByVideo = std::map<std::string, StateSequence>;

std::vector<EncodedSegment> encode_segments(std::span<const EvalSegment> segments, const SequencesByVideo& sequences,
                                            SequenceEncoder& encoder, double fps);

/// Constant inputs of the graph stream.
struct StreamInputs {
  CsrMatrix adjacency;
  Matrix features;        // one row per graph node
  Matrix extra_features;  // rows for states outside the graph
};

// Graph stream -------------------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_top1 = 0.0;
  double val_top5 = 0.0;
};

/// `epoch<TAB>train_loss<TAB>val_top1<TAB>val_top5` per line.
std::string format_training_log(std::span<const EpochLog> history);

struct GraphTrainResult {
  GraphStreamModel model;
  Checkpoint checkpoint;
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
};

GraphTrainResult train_graph_stream(const TrainConfig& config, const ActivityGraph& graph, const StreamInputs& inputs,
                                    std::span<const EncodedSegment> train, std::span<const EncodedSegment> val);

/// Mean cross-entropy of a batch computed in one padded pass.
double batch_loss(const GraphStreamModel& model, const StreamInputs& inputs, std::span<const EncodedSegment> batch);

/// Softmax scores, one row per segment.
Matrix score_segments(const GraphStreamModel& model, const StreamInputs& inputs,
                      std::span<const EncodedSegment> segments, std::size_t batch_size = 64, std::size_t threads = 1);

// Fusion ---------------------------------------------------------------------------------

/// Per-segment probability rows, as read from or written to a score file.
struct ScoreTable {
  std::vector<std::string> ids;
  Matrix scores;

  std::optional<std::size_t> find(std::string_view id) const;
};

/// `segment_id<TAB>p1,p2,...` rows; each row must sum to 1 within 1e-6.
ScoreTable parse_score_text(std::string_view text, const std::string& source);
ScoreTable load_score_file(const std::filesystem::path& path);
std::string format_scores(const ScoreTable& table);

struct FusionTrainResult {
  FusionModel model;
  Checkpoint checkpoint;
  std::vector<EpochLog> history;
};

/// Trains W_f on frozen stream scores. Both tables must cover the same segment ids.
FusionTrainResult train_fusion(const TrainConfig& config, const ScoreTable& graph_scores,
                               const ScoreTable& appearance_scores, const std::map<std::string, std::size_t>& labels,
                               std::span<const std::string> train_ids, std::span<const std::string> val_ids);

/// Rows of `table` for `ids`, in order; DataError for missing ids.
Matrix select_scores(const ScoreTable& table, std::span<const std::string> ids);

}  // namespace egomg
