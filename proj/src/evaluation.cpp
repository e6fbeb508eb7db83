#include "egomg/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <memory>
#include <set>
#include <thread>
#include <tuple>

#include "egomg/io_util.hpp"

namespace egomg {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + std::string(s) + "' (expected train, val or test)");
}

std::optional<Split> Splits::of(const std::string& video_id) const {
  auto it = videos.find(video_id);
  if (it == videos.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Splits::videos_in(Split s) const {
  std::vector<std::string> out;
  for (const auto& [video, split] : videos) {
    if (split == s) out.push_back(video);
  }
  return out;
}

Splits parse_splits_text(std::string_view text, const std::string& source) {
  Splits splits;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (trim(raw).empty() || raw.front() == '#') continue;
    auto fields = split(raw, '\t');
    if (fields.size() != 2 || fields[0].empty()) throw ParseError(source, line_no, "expected video_id<TAB>split");
    Split s;
    try {
      s = parse_split(fields[1]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (!splits.videos.emplace(std::string(fields[0]), s).second) {
      throw ParseError(source, line_no, "video '" + std::string(fields[0]) + "' assigned to more than one split");
    }
  }
  return splits;
}

Splits load_splits(const std::filesystem::path& path) { return parse_splits_text(read_file(path), path.string()); }

std::string format_splits(const Splits& splits) {
  std::string out;
  for (const auto& [video, s] : splits.videos) out += video + '\t' + to_string(s) + '\n';
  return out;
}

// Dataset ---------------------------------------------------------------------------------

std::vector<ActionAnnotation> Dataset::annotations_in(Split s) const {
  std::vector<ActionAnnotation> out;
  for (const auto& a : annotations) {
    if (splits.of(a.video_id).value_or(Split::Train) == s) out.push_back(a);
  }
  return out;
}

Dataset prepare_dataset(const DetectionStream& traces, Vocabulary objects, std::vector<ActionAnnotation> annotations,
                        Splits splits, const FilterOptions& filter) {
  Dataset d;
  d.objects = std::move(objects);
  d.fps = filter.fps;
  d.sequences = extract_states(filter_contacts(traces, filter));
  for (const auto& s : d.sequences) d.by_video.emplace(s.video_id, s);
  for (const auto& [video, s] : splits.videos) {
    if (!d.by_video.contains(video)) throw DataError("split table lists video '" + video + "' which has no trace");
  }
  for (const auto& a : annotations) {
    if (!d.by_video.contains(a.video_id)) throw DataError("annotation references video '" + a.video_id + "' which has no trace");
  }
  for (const auto& s : d.sequences) splits.videos.try_emplace(s.video_id, Split::Train);
  d.actions = ActionVocabulary::from_annotations(annotations);
  assign_action_ids(annotations, d.actions);
  d.annotations = std::move(annotations);
  d.splits = std::move(splits);
  return d;
}

std::map<std::string, std::size_t> segment_labels(std::span<const ActionAnnotation> annotations) {
  std::map<std::string, std::size_t> out;
  for (const auto& s : make_segments(annotations, 0.0).segments) out.emplace(s.segment_id, static_cast<std::size_t>(s.label));
  return out;
}

// Graph stream setup -----------------------------------------------------------------------------

GraphStream make_graph_stream(ActivityGraph graph, const StreamSetup& setup) {
  GraphStream s;
  s.graph = std::move(graph);
  s.graph.rebuild_index();
  s.adjacency = normalize_adjacency(s.graph);
  if (setup.source == FeatureSource::Identity) {
    s.features = build_identity_features(s.graph);
    const std::size_t width = s.features.cols;
    s.unseen_features = [width](const ManipulationState&) { return std::vector<double>(width, 0.0); };
  } else {
    if (!setup.embeddings) throw std::invalid_argument("embedding features requested without an embedding table");
    s.features = build_feature_matrix(s.graph, *setup.embeddings, setup.feature_options);
    // Unseen states only combine known nouns, so keep just their sub-tokens.
    auto table = std::make_shared<EmbeddingTable>();
    table->dimension = setup.embeddings->dimension;
    for (const auto& noun : s.graph.objects.nouns()) {
      for (auto token : split(noun, ':')) {
        if (const auto* v = setup.embeddings->find(token)) table->entries.emplace(std::string(token), *v);
      }
    }
    const FeatureOptions options = setup.feature_options;
    auto vocab = std::make_shared<const Vocabulary>(s.graph.objects);
    s.unseen_features = [table, options, vocab](const ManipulationState& st) {
      return state_features(st, *vocab, *table, options);
    };
  }
  return s;
}

GraphStream make_graph_stream(const Dataset& data, const StreamSetup& setup) {
  const auto train = data.annotations_in(Split::Train);
  return make_graph_stream(build_graph(data.sequences, train, data.objects, data.actions, setup.graph_options), setup);
}

EncodedParts encode_parts(const GraphStream& stream, const Dataset& data,
                          std::span<const std::vector<ActionAnnotation>> groups, double anticipation_seconds,
                          double observation_seconds, std::size_t max_sequence_length) {
  SequenceEncoder encoder(stream.graph, stream.features.cols, stream.unseen_features, max_sequence_length);
  EncodedParts out;
  for (const auto& group : groups) {
    auto set = make_segments(group, anticipation_seconds, observation_seconds, data.fps);
    out.dropped += set.dropped;
    out.parts.push_back(encode_segments(set.segments, data.by_video, encoder, data.fps));
    out.segments.push_back(std::move(set.segments));
  }
  out.inputs = {stream.adjacency, stream.features, encoder.extra_features()};
  return out;
}

GraphTrainResult train_on_dataset(const TrainConfig& config, const GraphStream& stream, const Dataset& data,
                                  double anticipation_seconds, double observation_seconds) {
  const std::vector<std::vector<ActionAnnotation>> groups{data.annotations_in(Split::Train),
                                                          data.annotations_in(Split::Val)};
  auto enc = encode_parts(stream, data, groups, anticipation_seconds, observation_seconds, config.max_sequence_length);
  return train_graph_stream(config, stream.graph, enc.inputs, enc.parts[0], enc.parts[1]);
}

// Reports ------------------------------------------------------------------------------------

const ReportRow* EvalReport::find(std::string_view config, double tau_a) const {
  for (const auto& r : rows) {
    if (r.config == config && r.tau_a == tau_a) return &r;
  }
  return nullptr;
}

std::string format_report_tsv(const EvalReport& report) {
  std::string out = "config\ttau_a\ttop1\ttop5\tn\n";
  for (const auto& r : report.rows) {
    out += r.config + '\t' + format_double(r.tau_a) + '\t' + format_double(r.top1) + '\t' + format_double(r.top5) +
           '\t' + std::to_string(r.n) + '\n';
  }
  return out;
}

std::string render_report(const EvalReport& report) {
  std::size_t width = 6;
  for (const auto& r : report.rows) width = std::max(width, r.config.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %6s  %7s  %7s  %6s\n", static_cast<int>(width), "config", "tau_a", "top1",
                "top5", "n");
  std::string out = buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %6.2f  %7.2f  %7.2f  %6zu\n", static_cast<int>(width), r.config.c_str(),
                  r.tau_a, 100.0 * r.top1, 100.0 * r.top5, r.n);
    out += buf;
  }
  return out;
}

ReportRow score_row(std::string config, double tau_a, const Matrix& scores, std::span<const std::size_t> labels) {
  if (scores.rows == 0) throw DataError("no evaluation segments for " + config + " at tau_a=" + format_double(tau_a));
  const std::size_t k5 = std::min<std::size_t>(5, scores.cols);
  return {std::move(config), tau_a, topk_accuracy(scores, labels, 1), topk_accuracy(scores, labels, k5), scores.rows};
}

EvalReport evaluate_grid(const GraphStreamModel& model, const GraphStream& stream, const Dataset& data,
                         const GridOptions& options, const AppearanceSource& appearance, const FusionModel* fusion,
                         std::vector<GridScores>* scores) {
  if ((options.appearance || options.fused) && !appearance) {
    throw DataError("appearance or fused evaluation requested without an appearance score file");
  }
  if (options.fused && !fusion) throw DataError("fused evaluation requested without a fusion checkpoint");
  const std::vector<std::vector<ActionAnnotation>> groups{options.split ? data.annotations_in(*options.split)
                                                                        : data.annotations};

  EvalReport report;
  for (double tau : options.tau_grid) {
    if (!(tau >= 0.0)) throw std::invalid_argument("anticipation time must be non-negative");
    auto enc = encode_parts(stream, data, groups, tau, options.observation_seconds, options.max_sequence_length);
    const auto& segs = enc.parts[0];
    std::vector<std::size_t> labels;
    std::vector<std::string> ids;
    for (const auto& s : segs) {
      labels.push_back(s.label);
      ids.push_back(s.segment_id);
    }
    Matrix g = score_segments(model, enc.inputs, segs, 64, options.threads);
    if (options.graph) report.rows.push_back(score_row("graph", tau, g, labels));
    if (options.appearance || options.fused) {
      const Matrix a = select_scores(appearance(tau), ids);
      if (a.cols != g.cols) throw DataError("appearance scores have the wrong number of actions");
      if (options.appearance) report.rows.push_back(score_row("appearance", tau, a, labels));
      if (options.fused) report.rows.push_back(score_row("fused", tau, fusion->predict(g, a), labels));
    }
    if (scores) scores->push_back({tau, ScoreTable{std::move(ids), std::move(g)}});
  }
  return report;
}

// Ablations -------------------------------------------------------------------------------------

std::vector<AblationConfig> ablation_configs() {
  return {
      {"LSTM-Aggr.", Aggregation::Lstm, true, FeatureSource::Embedding},
      {"Mean-Aggr.", Aggregation::Mean, true, FeatureSource::Embedding},
      {"Term-State-Class.", Aggregation::Terminal, true, FeatureSource::Embedding},
      {"Embedding+GCN", Aggregation::Lstm, true, FeatureSource::Embedding},
      {"Embedding+No-GCN", Aggregation::Lstm, false, FeatureSource::Embedding},
      {"Identity+GCN", Aggregation::Lstm, true, FeatureSource::Identity},
      {"Identity+No-GCN", Aggregation::Lstm, false, FeatureSource::Identity},
  };
}

EvalReport run_ablations(const TrainConfig& base, const Dataset& data, const EmbeddingTable& embeddings,
                         const AblationOptions& options) {
  const auto configs = ablation_configs();
  using Key = std::tuple<Aggregation, bool, FeatureSource>;
  std::vector<Key> unique;
  std::vector<std::size_t> slot;
  for (const auto& c : configs) {
    const Key key{c.aggregation, c.use_gcn, c.source};
    auto it = std::find(unique.begin(), unique.end(), key);
    slot.push_back(static_cast<std::size_t>(it - unique.begin()));
    if (it == unique.end()) unique.push_back(key);
  }

  const std::vector<std::vector<ActionAnnotation>> eval_groups{data.annotations_in(options.split)};
  std::vector<ReportRow> results(unique.size());
  auto run_one = [&](std::size_t i) {
    const auto [aggregation, use_gcn, source] = unique[i];
    StreamSetup setup;
    setup.source = source;
    setup.embeddings = &embeddings;
    const GraphStream stream = make_graph_stream(data, setup);
    TrainConfig config = base;
    config.aggregation = aggregation;
    config.use_gcn = use_gcn;
    auto trained = train_on_dataset(config, stream, data, options.anticipation_seconds, options.observation_seconds);
    auto enc = encode_parts(stream, data, eval_groups, options.anticipation_seconds, options.observation_seconds,
                            config.max_sequence_length);
    std::vector<std::size_t> labels;
    for (const auto& s : enc.parts[0]) labels.push_back(s.label);
    results[i] = score_row("", options.anticipation_seconds, score_segments(trained.model, enc.inputs, enc.parts[0]), labels);
  };

  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, unique.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < unique.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i; (i = next++) < unique.size();) run_one(i);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EvalReport report;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    ReportRow row = results[slot[c]];
    row.config = configs[c].name;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace egomg
