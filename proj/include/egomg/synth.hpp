#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "egomg/embedding.hpp"
#include "egomg/evaluation.hpp"
#include "egomg/graph.hpp"
#include "egomg/matrix.hpp"
#include "egomg/segments.hpp"
#include "egomg/trace.hpp"
#include "egomg/training.hpp"

namespace egomg {

/// Generative model of egocentric activity: a Markov chain over explicit state tuples with
/// per-state dwell times and action emissions.
///
/// Dwell (in detection steps) is min_dwell plus a geometric extra with mean
/// mean_dwell - min_dwell, capped at max_dwell. An emitted action starts lead_steps into the
/// state's span and stops right after its last record.
struct ActivityGrammar {
  std::vector<std::string> objects;
  std::vector<std::pair<std::string, std::string>> actions;  // (verb, noun)
  std::vector<ManipulationState> states;                     // ids index `objects`
  Matrix transitions;                                        // states x states, zero diagonal
  std::vector<double> initial;                               // over states
  Matrix emissions;                                          // states x actions; zero rows never emit

  double emission_rate = 1.0;
  std::size_t min_dwell = 12;
  double mean_dwell = 16.0;
  std::size_t max_dwell = 30;
  std::size_t lead_steps = 9;
  Frame stride = 2;
  double fps = 15.0;
  double history_seconds = 7.0;
  double distractor_rate = 0.0;
  double dropout_rate = 0.0;

  Vocabulary vocabulary() const;
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

/// `EGO-OMG-GRAMMAR v1`, `key = value` lines, then `objects N`, `actions N`, `states N`,
/// `transitions N`, `initial`, `emissions N` blocks.
std::string format_grammar(const ActivityGrammar& grammar);
ActivityGrammar parse_grammar_text(std::string_view text, const std::string& source);
ActivityGrammar load_grammar(const std::filesystem::path& path);

struct SyntheticData {
  Vocabulary objects;
  ActionVocabulary actions;
  DetectionStream traces;
  std::vector<ActionAnnotation> annotations;  // action ids assigned
  std::vector<StateSequence> chains;          // sampled state chains, one per video
  ActivityGraph truth;                        // the generating graph
};

/// Samples `n_videos` videos of `steps_per_video` detection steps. Each video draws from its own
/// generator seeded from (seed, video index).
SyntheticData generate_traces(const ActivityGrammar& grammar, std::size_t n_videos, std::size_t steps_per_video,
                              std::uint64_t seed, const std::string& video_prefix = "v");

/// States, transition probabilities and emission probabilities of the grammar as a graph.
ActivityGraph grammar_graph(const ActivityGrammar& grammar);

/// Ten states over six objects; state i emits action i mod 5 and moves to i+1, i+3 or i+7 (mod 10).
ActivityGrammar learnable_grammar();
/// Same states and emissions, but every successor is equally likely, so only the latest state
/// predicts the next action.
ActivityGrammar recency_grammar();

/// First `n_train` videos train, next `n_val` val, the rest test (video id order).
Splits sequential_splits(std::span<const VideoDetections> videos, std::size_t n_train, std::size_t n_val);

/// Gaussian vectors for every noun sub-token and verb of the grammar.
EmbeddingTable random_embeddings(const ActivityGrammar& grammar, std::size_t dimension, std::uint64_t seed);

struct AppearanceOptions {
  double accuracy = 0.5;   // chance the peak sits on the true label
  double peak = 3.0;       // logit added at the peak
  double noise = 1.0;      // logit noise standard deviation
  std::uint64_t seed = 0;
};

/// Noisy label-peaked softmax rows standing in for an external appearance stream. Each row
/// depends only on (seed, segment id, anticipation time).
ScoreTable simulate_appearance_scores(std::span<const EvalSegment> segments, std::size_t num_actions,
                                      const AppearanceOptions& options);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace egomg
