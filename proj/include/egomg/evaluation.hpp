#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egomg/embedding.hpp"
#include "egomg/graph.hpp"
#include "egomg/models.hpp"
#include "egomg/segments.hpp"
#include "egomg/trace.hpp"
#include "egomg/training.hpp"

namespace egomg {

// Splits ------------------------------------------------------------------------------

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split parse_split(std::string_view s);

/// Video id -> split. Each video appears once, so splits are disjoint.
struct Splits {
  std::map<std::string, Split> videos;

  std::optional<Split> of(const std::string& video_id) const;
  std::vector<std::string> videos_in(Split s) const;
};

/// `video_id<TAB>train|val|test` per line, `#` comments.
Splits parse_splits_text(std::string_view text, const std::string& source);
Splits load_splits(const std::filesystem::path& path);
std::string format_splits(const Splits& splits);

// Dataset -----------------------------------------------------------------------------

/// Traces reduced to state sequences, annotations with action ids, and the split table.
struct Dataset {
  Vocabulary objects;
  ActionVocabulary actions;
  std::vector<StateSequence> sequences;  // every video, ordered by id
  SequencesByVideo by_video;
  std::vector<ActionAnnotation> annotations;
  Splits splits;
  double fps = 15.0;

  std::vector<ActionAnnotation> annotations_in(Split s) const;
};

/// Runs the contact filter and state extraction. Videos missing from `splits` count as train;
/// annotations on videos without a trace raise DataError.
Dataset prepare_dataset(const DetectionStream& traces, Vocabulary objects, std::vector<ActionAnnotation> annotations,
                        Splits splits, const FilterOptions& filter = {});

/// Segment id -> action id over all annotations.
std::map<std::string, std::size_t> segment_labels(std::span<const ActionAnnotation> annotations);

// Graph stream setup --------------------------------------------------------------------

struct StreamSetup {
  FeatureSource source = FeatureSource::Embedding;
  const EmbeddingTable* embeddings = nullptr;  // required for FeatureSource::Embedding
  FeatureOptions feature_options;
  GraphOptions graph_options;
};

/// Graph, adjacency and node features; unseen states get features from the same source.
struct GraphStream {
  ActivityGraph graph;
  CsrMatrix adjacency;
  Matrix features;
  SequenceEncoder::FeatureFn unseen_features;
};

/// Builds the graph from every sequence and the training annotations.
GraphStream make_graph_stream(const Dataset& data, const StreamSetup& setup);
/// Uses an existing graph (e.g. loaded from disk).
GraphStream make_graph_stream(ActivityGraph graph, const StreamSetup& setup);

/// Segments of several annotation groups encoded with one shared encoder.
struct EncodedParts {
  StreamInputs inputs;
  std::vector<std::vector<EncodedSegment>> parts;
  std::vector<std::vector<EvalSegment>> segments;
  std::size_t dropped = 0;
};

EncodedParts encode_parts(const GraphStream& stream, const Dataset& data,
                          std::span<const std::vector<ActionAnnotation>> groups, double anticipation_seconds,
                          double observation_seconds, std::size_t max_sequence_length);

/// Graph stream trained on the train split, validated on the val split.
GraphTrainResult train_on_dataset(const TrainConfig& config, const GraphStream& stream, const Dataset& data,
                                  double anticipation_seconds, double observation_seconds = 60.0);

// Reports --------------------------------------------------------------------------------

struct ReportRow {
  std::string config;
  double tau_a = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::size_t n = 0;
};

struct EvalReport {
  std::vector<ReportRow> rows;

  const ReportRow* find(std::string_view config, double tau_a) const;
};

/// Header `config<TAB>tau_a<TAB>top1<TAB>top5<TAB>n`.
std::string format_report_tsv(const EvalReport& report);
/// Aligned columns, accuracies in percent.
std::string render_report(const EvalReport& report);

/// Top-1 and top-k (k = min(5, |A|)) over score rows.
ReportRow score_row(std::string config, double tau_a, const Matrix& scores, std::span<const std::size_t> labels);

inline const std::vector<double> kDefaultTauGrid{5.0, 2.5, 1.5, 1.0, 0.5, 0.0};

/// Appearance scores for one anticipation time.
using AppearanceSource = std::function<ScoreTable(double tau_a)>;

struct GridOptions {
  std::vector<double> tau_grid = kDefaultTauGrid;
  double observation_seconds = 60.0;
  std::optional<Split> split = Split::Test;  // nullopt: every split
  bool graph = true;
  bool appearance = false;
  bool fused = false;
  std::size_t max_sequence_length = 128;
  std::size_t threads = 1;
};

/// Per-tau graph-stream scores, kept so callers can write score files.
struct GridScores {
  double tau_a = 0.0;
  ScoreTable graph;
};

/// Rows for each tau in the grid and each enabled stream (`graph`, `appearance`, `fused`).
/// Appearance-based rows need `appearance`; fused rows also need `fusion`.
EvalReport evaluate_grid(const GraphStreamModel& model, const GraphStream& stream, const Dataset& data,
                         const GridOptions& options, const AppearanceSource& appearance = {},
                         const FusionModel* fusion = nullptr, std::vector<GridScores>* scores = nullptr);

// Ablations ------------------------------------------------------------------------------

struct AblationConfig {
  std::string name;
  Aggregation aggregation = Aggregation::Lstm;
  bool use_gcn = true;
  FeatureSource source = FeatureSource::Embedding;
};

/// The aggregation rows followed by the GCN x feature-source grid.
std::vector<AblationConfig> ablation_configs();

struct AblationOptions {
  double anticipation_seconds = 1.0;
  double observation_seconds = 60.0;
  Split split = Split::Test;
  std::size_t threads = 1;
};

/// Trains and evaluates every ablation config. Configurations that coincide are trained once.
EvalReport run_ablations(const TrainConfig& base, const Dataset& data, const EmbeddingTable& embeddings,
                         const AblationOptions& options = {});

}  // namespace egomg
