#include "egomg/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "egomg/checkpoint.hpp"
#include "egomg/config.hpp"
#include "egomg/embedding.hpp"
#include "egomg/evaluation.hpp"
#include "egomg/graph.hpp"
#include "egomg/io_util.hpp"
#include "egomg/synth.hpp"
#include "egomg/training.hpp"

namespace egomg {

namespace {

namespace fs = std::filesystem;

struct Invocation {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> overrides;
};

// Path helpers ----------------------------------------------------------------------------

fs::path input_path(const RunConfig& c, const std::string& key, const std::string& flag) {
  if (!c.has(key)) throw ConfigError("missing required " + flag + " (or " + key + " in the config file)");
  fs::path p = c.str(key);
  if (!fs::exists(p)) throw ConfigError("file not found for " + flag + ": " + p.string());
  return p;
}

fs::path output_path(const RunConfig& c, const std::string& key, const std::string& flag) {
  if (!c.has(key)) throw ConfigError("missing required " + flag + " (or " + key + " in the config file)");
  return c.str(key);
}

std::string expand_tau(const std::string& pattern, double tau) {
  std::string out = pattern;
  const std::string token = "{tau}";
  for (auto pos = out.find(token); pos != std::string::npos; pos = out.find(token, pos)) {
    out.replace(pos, token.size(), format_double(tau));
  }
  return out;
}

// Settings ---------------------------------------------------------------------------------

FeatureSource parse_source(const std::string& s) {
  if (s == "embedding") return FeatureSource::Embedding;
  if (s == "identity") return FeatureSource::Identity;
  throw ConfigError("features.source must be 'embedding' or 'identity', got '" + s + "'");
}

std::string source_name(FeatureSource s) { return s == FeatureSource::Embedding ? "embedding" : "identity"; }

ActionEdgeDirection parse_direction(const std::string& s) {
  if (s == "state_to_action") return ActionEdgeDirection::StateToAction;
  if (s == "action_to_state") return ActionEdgeDirection::ActionToState;
  throw ConfigError("graph.action_edge_direction must be 'state_to_action' or 'action_to_state', got '" + s + "'");
}

std::optional<Split> parse_split_option(const std::string& s) {
  if (s == "all") return std::nullopt;
  try {
    return parse_split(s);
  } catch (const std::invalid_argument&) {
    throw ConfigError("eval.split must be train, val, test or all, got '" + s + "'");
  }
}

double tau_of(const RunConfig& c) {
  const double tau = c.real("data.tau_a");
  if (tau < 0.0) throw ConfigError("data.tau_a must be non-negative");
  return tau;
}

double observation_of(const RunConfig& c) {
  const double obs = c.real("data.observation_seconds");
  if (!(obs > 0.0)) throw ConfigError("data.observation_seconds must be positive");
  return obs;
}

std::size_t threads_of(const RunConfig& c) { return std::max<std::size_t>(1, c.count("run.threads")); }

// Loading ----------------------------------------------------------------------------------------

Dataset load_dataset(const RunConfig& c) {
  Vocabulary vocab;
  auto traces = parse_trace_file(input_path(c, "paths.traces", "--traces"), vocab);
  auto annotations = parse_annotation_file(input_path(c, "paths.annotations", "--annotations"));
  Splits splits;
  if (c.has("paths.splits")) splits = load_splits(input_path(c, "paths.splits", "--splits"));
  return prepare_dataset(traces, std::move(vocab), std::move(annotations), std::move(splits), c.filter_options());
}

struct StreamContext {
  std::optional<EmbeddingTable> embeddings;
  GraphStream stream;
};

StreamContext load_stream(const RunConfig& c, const Dataset& data, FeatureSource source, ActionEdgeDirection direction,
                          bool count_duplicates) {
  StreamContext ctx;
  if (source == FeatureSource::Embedding) ctx.embeddings = parse_embedding_file(input_path(c, "paths.embeddings", "--embeddings"));
  StreamSetup setup;
  setup.source = source;
  setup.embeddings = ctx.embeddings ? &*ctx.embeddings : nullptr;
  setup.feature_options.count_duplicate_nouns = count_duplicates;
  setup.graph_options.action_edge_direction = direction;
  if (c.has("paths.graph")) {
    ActivityGraph g = load_graph(input_path(c, "paths.graph", "--graph"));
    if (!(g.objects == data.objects) || !(g.actions == data.actions)) {
      throw DataError("graph file " + c.str("paths.graph") + " was not built from these traces and annotations");
    }
    ctx.stream = make_graph_stream(std::move(g), setup);
  } else {
    ctx.stream = make_graph_stream(data, setup);
  }
  return ctx;
}

struct LoadedModel {
  Checkpoint checkpoint;
  GraphStreamModel model;
  FeatureSource source = FeatureSource::Embedding;
  ActionEdgeDirection direction = ActionEdgeDirection::StateToAction;
  bool count_duplicates = false;
  std::size_t max_sequence_length = 128;
};

LoadedModel load_model(const RunConfig& c) {
  LoadedModel m;
  m.checkpoint = load_checkpoint(input_path(c, "paths.checkpoint", "--checkpoint"));
  m.model = GraphStreamModel::load(m.checkpoint);
  m.source = parse_source(m.checkpoint.get("features.source").value_or(c.str("features.source")));
  m.direction = parse_direction(m.checkpoint.get("graph.action_edge_direction").value_or(c.str("graph.action_edge_direction")));
  m.count_duplicates = m.checkpoint.get("features.count_duplicate_nouns").value_or("false") == "true";
  if (auto v = m.checkpoint.get("train.max_sequence_length")) {
    m.max_sequence_length = static_cast<std::size_t>(parse_int(*v).value_or(128));
  }
  return m;
}

void check_model_fits(const GraphStreamModel& model, const GraphStream& stream) {
  if (model.config().input_dim != stream.features.cols) {
    throw DataError("checkpoint expects node features of width " + std::to_string(model.config().input_dim) +
                    ", the graph provides " + std::to_string(stream.features.cols));
  }
  if (model.config().num_actions != stream.graph.action_count()) {
    throw DataError("checkpoint predicts " + std::to_string(model.config().num_actions) + " actions, the data has " +
                    std::to_string(stream.graph.action_count()));
  }
}

void emit_report(const RunConfig& c, const EvalReport& report, std::ostream& out) {
  if (c.has("paths.report")) write_file(c.str("paths.report"), format_report_tsv(report));
  out << render_report(report);
}

// Subcommands -----------------------------------------------------------------------------------

int cmd_ingest(const RunConfig& c, std::ostream& out) {
  Vocabulary vocab;
  const auto traces = parse_trace_file(input_path(c, "paths.traces", "--traces"), vocab);
  const auto sequences = extract_states(filter_contacts(traces, c.filter_options()));
  std::set<ManipulationState> states;
  std::size_t spans = 0;
  for (const auto& s : sequences) {
    spans += s.items.size();
    for (const auto& item : s.items) states.insert(item.state);
  }
  out << "videos\t" << traces.videos.size() << '\n';
  out << "records\t" << traces.record_count() << '\n';
  out << "objects\t" << vocab.size() << '\n';
  out << "states\t" << states.size() << '\n';
  out << "state_spans\t" << spans << '\n';
  if (c.has("paths.annotations")) {
    const auto annotations = parse_annotation_file(input_path(c, "paths.annotations", "--annotations"));
    std::set<std::string> videos;
    for (const auto& v : traces.videos) videos.insert(v.video_id);
    for (const auto& a : annotations) {
      if (!videos.contains(a.video_id)) throw DataError("annotation references video '" + a.video_id + "' which has no trace");
    }
    out << "annotations\t" << annotations.size() << '\n';
    out << "actions\t" << ActionVocabulary::from_annotations(annotations).size() << '\n';
  }
  return 0;
}

int cmd_build_graph(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto path = output_path(c, "paths.out", "--out");
  const Dataset data = load_dataset(c);
  GraphOptions options;
  options.action_edge_direction = parse_direction(c.str("graph.action_edge_direction"));
  std::vector<std::string> warnings;
  const auto graph = build_graph(data.sequences, data.annotations_in(Split::Train), data.objects, data.actions, options, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  save_graph(graph, path);
  out << "graph\t" << graph.state_count() << " states\t" << graph.action_count() << " actions\t" << graph.edges.size()
      << " edges\t" << path.string() << '\n';
  return 0;
}

int cmd_features(const RunConfig& c, std::ostream& out) {
  const auto path = output_path(c, "paths.out", "--out");
  const auto graph = load_graph(input_path(c, "paths.graph", "--graph"));
  Matrix features;
  if (parse_source(c.str("features.source")) == FeatureSource::Identity) {
    features = build_identity_features(graph);
  } else {
    const auto table = parse_embedding_file(input_path(c, "paths.embeddings", "--embeddings"));
    FeatureOptions options;
    options.count_duplicate_nouns = c.flag("features.count_duplicate_nouns");
    features = build_feature_matrix(graph, table, options);
  }
  write_file(path, serialize_features(features));
  out << "features\t" << features.rows << " x " << features.cols << '\t' << path.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  const auto path = output_path(c, "paths.out", "--out");
  const TrainConfig config = c.train_config();
  const FeatureSource source = parse_source(c.str("features.source"));
  const ActionEdgeDirection direction = parse_direction(c.str("graph.action_edge_direction"));
  const bool count_duplicates = c.flag("features.count_duplicate_nouns");
  const double tau = tau_of(c);
  const Dataset data = load_dataset(c);
  const auto ctx = load_stream(c, data, source, direction, count_duplicates);
  auto result = train_on_dataset(config, ctx.stream, data, tau, observation_of(c));
  result.checkpoint.set("features.source", source_name(source));
  result.checkpoint.set("features.count_duplicate_nouns", count_duplicates ? "true" : "false");
  result.checkpoint.set("graph.action_edge_direction", c.str("graph.action_edge_direction"));
  result.checkpoint.set("data.tau_a", format_double(tau));
  save_checkpoint(result.checkpoint, path);
  const std::string log = format_training_log(result.history);
  write_file(c.has("paths.log") ? fs::path(c.str("paths.log")) : fs::path(path.string() + ".log"), log);
  out << log;
  out << "best_epoch\t" << result.best_epoch << '\t' << path.string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  GridOptions options;
  options.tau_grid = c.reals("eval.tau_grid");
  for (double t : options.tau_grid) {
    if (t < 0.0) throw ConfigError("eval.tau_grid values must be non-negative");
  }
  options.observation_seconds = observation_of(c);
  options.split = parse_split_option(c.str("eval.split"));
  options.graph = false;
  for (auto name : split(c.str("eval.configs"), ',')) {
    name = trim(name);
    if (name == "graph") options.graph = true;
    else if (name == "appearance") options.appearance = true;
    else if (name == "fused") options.fused = true;
    else throw ConfigError("eval.configs entries must be graph, appearance or fused, got '" + std::string(name) + "'");
  }
  options.threads = threads_of(c);
  if (c.has("paths.scores_out") && options.tau_grid.size() > 1 && c.str("paths.scores_out").find("{tau}") == std::string::npos) {
    throw ConfigError("--scores-out needs a {tau} placeholder when the grid has several values");
  }

  const Dataset data = load_dataset(c);
  const LoadedModel m = load_model(c);
  options.max_sequence_length = m.max_sequence_length;
  const auto ctx = load_stream(c, data, m.source, m.direction, m.count_duplicates);
  check_model_fits(m.model, ctx.stream);

  AppearanceSource appearance;
  if (c.has("paths.appearance_scores")) {
    const std::string pattern = c.str("paths.appearance_scores");
    appearance = [pattern](double tau) {
      const fs::path p = expand_tau(pattern, tau);
      if (!fs::exists(p)) throw DataError("missing appearance score file " + p.string());
      return load_score_file(p);
    };
  }
  std::optional<FusionModel> fusion;
  if (options.fused && c.has("paths.fusion_checkpoint")) {
    fusion = FusionModel::load(load_checkpoint(input_path(c, "paths.fusion_checkpoint", "--fusion-checkpoint")));
  }

  std::vector<GridScores> scores;
  const EvalReport report =
      evaluate_grid(m.model, ctx.stream, data, options, appearance, fusion ? &*fusion : nullptr, &scores);
  if (c.has("paths.scores_out")) {
    for (const auto& s : scores) write_file(expand_tau(c.str("paths.scores_out"), s.tau_a), format_scores(s.graph));
  }
  emit_report(c, report, out);
  return 0;
}

int cmd_ablate(const RunConfig& c, std::ostream& out) {
  const TrainConfig config = c.train_config();
  AblationOptions options;
  options.anticipation_seconds = tau_of(c);
  options.observation_seconds = observation_of(c);
  auto split = parse_split_option(c.str("eval.split"));
  if (!split) throw ConfigError("ablate evaluates one split; eval.split cannot be 'all'");
  options.split = *split;
  options.threads = threads_of(c);
  const Dataset data = load_dataset(c);
  const auto table = parse_embedding_file(input_path(c, "paths.embeddings", "--embeddings"));
  emit_report(c, run_ablations(config, data, table, options), out);
  return 0;
}

int cmd_predict(const RunConfig& c, std::ostream& out) {
  const double tau = tau_of(c);
  const double obs = observation_of(c);
  const Dataset data = load_dataset(c);
  const LoadedModel m = load_model(c);
  const auto ctx = load_stream(c, data, m.source, m.direction, m.count_duplicates);
  check_model_fits(m.model, ctx.stream);

  EvalSegment segment;
  if (c.has("predict.segment")) {
    const auto set = make_segments(data.annotations, tau, obs, data.fps);
    auto it = std::find_if(set.segments.begin(), set.segments.end(),
                           [&](const EvalSegment& s) { return s.segment_id == c.str("predict.segment"); });
    if (it == set.segments.end()) {
      throw DataError("no segment '" + c.str("predict.segment") + "' (unknown id or window before frame 0)");
    }
    segment = *it;
  } else if (c.has("predict.video") && c.has("predict.frame")) {
    auto frame = parse_int(c.str("predict.frame"));
    if (!frame || *frame < 0) throw ConfigError("--frame must be a non-negative integer");
    segment = {c.str("predict.video") + "@" + c.str("predict.frame"), c.str("predict.video"), *frame, tau, obs, 0};
    if (observation_window(*frame, tau, obs, data.fps).end <= 0) throw DataError("observation window ends before frame 0");
  } else {
    throw ConfigError("predict needs --segment, or --video together with --frame");
  }

  SequenceEncoder encoder(ctx.stream.graph, ctx.stream.features.cols, ctx.stream.unseen_features, m.max_sequence_length);
  const std::vector<EvalSegment> one{segment};
  const auto encoded = encode_segments(one, data.by_video, encoder, data.fps);
  const StreamInputs inputs{ctx.stream.adjacency, ctx.stream.features, encoder.extra_features()};
  const Matrix scores = score_segments(m.model, inputs, encoded);
  for (std::size_t id : top_k(scores.row(0), 5)) {
    char prob[32];
    std::snprintf(prob, sizeof prob, "%.6f", scores(0, id));
    out << data.actions.label(static_cast<int>(id)) << '\t' << prob << '\n';
  }
  return 0;
}

int cmd_synth(const RunConfig& c, std::ostream& out) {
  const fs::path dir = output_path(c, "paths.out", "--out");
  ActivityGrammar grammar;
  if (c.has("paths.grammar")) {
    grammar = load_grammar(input_path(c, "paths.grammar", "--grammar"));
  } else if (c.str("synth.preset") == "learnable") {
    grammar = learnable_grammar();
  } else if (c.str("synth.preset") == "recency") {
    grammar = recency_grammar();
  } else {
    throw ConfigError("synth.preset must be 'learnable' or 'recency', got '" + c.str("synth.preset") + "'");
  }
  const std::uint64_t seed = c.u64("run.seed");
  const std::size_t videos = c.count("synth.videos");
  const auto data = generate_traces(grammar, videos, c.count("synth.steps"), seed);
  const Splits splits = sequential_splits(data.traces.videos, c.count("synth.train"), c.count("synth.val"));

  fs::create_directories(dir);
  write_file(dir / "grammar.txt", format_grammar(grammar));
  write_file(dir / "traces.tsv", format_trace(data.traces, data.objects));
  write_file(dir / "annotations.tsv", format_annotations(data.annotations));
  write_file(dir / "splits.tsv", format_splits(splits));
  write_file(dir / "embeddings.txt",
             format_embeddings(random_embeddings(grammar, c.count("synth.embedding_dim"), derive_seed(seed, 1u << 20))));
  write_file(dir / "truth.graph", serialize_graph(data.truth));

  AppearanceOptions appearance;
  appearance.accuracy = c.real("synth.appearance_accuracy");
  appearance.seed = derive_seed(seed, 1u << 21);
  for (double tau : c.reals("eval.tau_grid")) {
    const auto set = make_segments(data.annotations, tau, observation_of(c), grammar.fps);
    write_file(dir / ("appearance_" + format_double(tau) + ".tsv"),
               format_scores(simulate_appearance_scores(set.segments, data.actions.size(), appearance)));
  }

  std::string cfg;
  cfg += "paths.traces = " + (dir / "traces.tsv").string() + '\n';
  cfg += "paths.annotations = " + (dir / "annotations.tsv").string() + '\n';
  cfg += "paths.splits = " + (dir / "splits.tsv").string() + '\n';
  cfg += "paths.embeddings = " + (dir / "embeddings.txt").string() + '\n';
  cfg += "paths.appearance_scores = " + (dir / "appearance_{tau}.tsv").string() + '\n';
  cfg += "data.fps = " + format_double(grammar.fps) + '\n';
  cfg += "data.history_seconds = " + format_double(grammar.history_seconds) + '\n';
  write_file(dir / "run.cfg", cfg);

  out << "videos\t" << videos << "\nannotations\t" << data.annotations.size() << "\nactions\t" << data.actions.size()
      << "\nstates\t" << data.truth.state_count() << "\nout\t" << dir.string() << '\n';
  return 0;
}

int cmd_fuse(const RunConfig& c, std::ostream& out) {
  const TrainConfig config = c.train_config();
  const double tau = tau_of(c);
  const auto eval_split = parse_split_option(c.str("eval.split"));
  const ScoreTable graph_scores = load_score_file(input_path(c, "paths.graph_scores", "--graph-scores"));
  if (!c.has("paths.appearance_scores")) throw ConfigError("missing required --appearance-scores");
  const fs::path appearance_path = expand_tau(c.str("paths.appearance_scores"), tau);
  if (!fs::exists(appearance_path)) throw ConfigError("file not found for --appearance-scores: " + appearance_path.string());
  const ScoreTable appearance_scores = load_score_file(appearance_path);

  auto annotations = parse_annotation_file(input_path(c, "paths.annotations", "--annotations"));
  assign_action_ids(annotations, ActionVocabulary::from_annotations(annotations));
  const auto labels = segment_labels(annotations);
  const Splits splits = load_splits(input_path(c, "paths.splits", "--splits"));

  std::vector<std::string> train_ids, val_ids, eval_ids;
  for (const auto& id : graph_scores.ids) {
    const auto slash = id.rfind('/');
    const Split s = splits.of(slash == std::string::npos ? id : id.substr(0, slash)).value_or(Split::Train);
    if (s == Split::Train) train_ids.push_back(id);
    if (s == Split::Val) val_ids.push_back(id);
    if (!eval_split || s == *eval_split) eval_ids.push_back(id);
  }
  auto result = train_fusion(config, graph_scores, appearance_scores, labels, train_ids, val_ids);
  if (c.has("paths.out")) save_checkpoint(result.checkpoint, c.str("paths.out"));

  std::vector<std::size_t> y;
  for (const auto& id : eval_ids) y.push_back(labels.at(id));
  const Matrix g = select_scores(graph_scores, eval_ids);
  const Matrix a = select_scores(appearance_scores, eval_ids);
  EvalReport report;
  report.rows.push_back(score_row("graph", tau, g, y));
  report.rows.push_back(score_row("appearance", tau, a, y));
  report.rows.push_back(score_row("fused", tau, result.model.predict(g, a), y));
  emit_report(c, report, out);
  return 0;
}

// Option wiring -------------------------------------------------------------------------------

struct Binder {
  CLI::App* app;
  Invocation* inv;

  Binder& opt(const std::string& flag, const std::string& key, const std::string& help) {
    Invocation* target = inv;
    app->add_option_function<std::string>(
        flag, [target, key](const std::string& v) { target->overrides[key] = v; }, help + " [" + key + "]");
    return *this;
  }

  Binder& common() {
    app->add_option("--config", inv->config_path, "Config file of 'section.key = value' lines");
    app->add_option("--set", inv->sets, "Override any config key: --set section.key=value");
    return opt("--seed", "run.seed", "Seed for every random choice").opt("--threads", "run.threads", "Worker threads");
  }

  Binder& data() {
    return opt("--traces", "paths.traces", "Detection trace TSV")
        .opt("--annotations", "paths.annotations", "Action annotation TSV")
        .opt("--splits", "paths.splits", "Split table (video_id<TAB>train|val|test)")
        .opt("--fps", "data.fps", "Video frame rate")
        .opt("--history", "data.history_seconds", "Contact anticipation history in seconds")
        .opt("--tau", "data.tau_a", "Anticipation time in seconds")
        .opt("--observation", "data.observation_seconds", "Observation length in seconds");
  }

  Binder& features() {
    return opt("--embeddings", "paths.embeddings", "Word-vector text file")
        .opt("--features-source", "features.source", "embedding or identity")
        .opt("--graph", "paths.graph", "Prebuilt graph file")
        .opt("--edge-direction", "graph.action_edge_direction", "state_to_action or action_to_state");
  }

  Binder& training() {
    return opt("--mode", "train.mode", "joint or two_stage")
        .opt("--aggregation", "train.aggregation", "lstm, mean or terminal")
        .opt("--use-gcn", "train.use_gcn", "true or false")
        .opt("--lr", "train.learning_rate", "Learning rate")
        .opt("--batch-size", "train.batch_size", "Batch size")
        .opt("--epochs", "train.max_epochs", "Maximum epochs")
        .opt("--patience", "train.patience", "Early-stopping patience in epochs")
        .opt("--max-seq-len", "train.max_sequence_length", "Most recent states kept per segment")
        .opt("--pretrain-epochs", "train.pretrain_epochs", "GCN pretraining epochs in two_stage mode")
        .opt("--dropout", "train.dropout", "Dropout rate on the aggregate during training");
  }
};

void apply_invocation(RunConfig& c, const Invocation& inv) {
  if (!inv.config_path.empty()) c.load_file(inv.config_path);
  for (const auto& s : inv.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
    c.set(std::string(trim(std::string_view(s).substr(0, eq))), std::string(trim(std::string_view(s).substr(eq + 1))));
  }
  for (const auto& [k, v] : inv.overrides) c.set(k, v);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph-stream action anticipation from hand-object contact traces", "egomg"};
  app.require_subcommand(1);
  Invocation inv;

  struct Command {
    CLI::App* app;
    std::function<int(const RunConfig&)> run;
  };
  std::vector<Command> commands;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    return Binder{sub, &inv};
  };

  auto ingest = add("ingest", "Validate traces (and annotations) and print statistics");
  ingest.common().data();
  commands.push_back({ingest.app, [&](const RunConfig& c) { return cmd_ingest(c, out); }});

  auto build = add("build-graph", "Build the state/action graph and write it to --out");
  build.common().data().opt("--edge-direction", "graph.action_edge_direction", "state_to_action or action_to_state")
      .opt("--out", "paths.out", "Graph file to write");
  commands.push_back({build.app, [&](const RunConfig& c) { return cmd_build_graph(c, out, err); }});

  auto feats = add("features", "Write the node-feature matrix of a graph");
  feats.common()
      .opt("--graph", "paths.graph", "Graph file")
      .opt("--embeddings", "paths.embeddings", "Word-vector text file")
      .opt("--features-source", "features.source", "embedding or identity")
      .opt("--out", "paths.out", "Feature file to write");
  commands.push_back({feats.app, [&](const RunConfig& c) { return cmd_features(c, out); }});

  auto train = add("train", "Train the graph stream; writes a checkpoint and a per-epoch log");
  train.common().data().features().training().opt("--out", "paths.out", "Checkpoint to write")
      .opt("--log", "paths.log", "Training log (default: <out>.log)");
  commands.push_back({train.app, [&](const RunConfig& c) { return cmd_train(c, out); }});

  auto eval = add("eval", "Evaluate a checkpoint over a grid of anticipation times");
  eval.common().data().features()
      .opt("--checkpoint", "paths.checkpoint", "Graph-stream checkpoint")
      .opt("--tau-grid", "eval.tau_grid", "Comma-separated anticipation times")
      .opt("--split", "eval.split", "train, val, test or all")
      .opt("--configs", "eval.configs", "Comma list of graph, appearance, fused")
      .opt("--appearance-scores", "paths.appearance_scores", "Appearance score file; {tau} expands per grid value")
      .opt("--fusion-checkpoint", "paths.fusion_checkpoint", "Fusion checkpoint for the fused rows")
      .opt("--scores-out", "paths.scores_out", "Write graph-stream scores; {tau} expands per grid value")
      .opt("--report", "paths.report", "Report TSV to write");
  commands.push_back({eval.app, [&](const RunConfig& c) { return cmd_eval(c, out); }});

  auto ablate = add("ablate", "Train and evaluate the aggregation and GCN/feature ablations");
  ablate.common().data().training()
      .opt("--embeddings", "paths.embeddings", "Word-vector text file")
      .opt("--split", "eval.split", "train, val or test")
      .opt("--report", "paths.report", "Report TSV to write");
  commands.push_back({ablate.app, [&](const RunConfig& c) { return cmd_ablate(c, out); }});

  auto predict = add("predict", "Print the five most likely next actions for one segment");
  predict.common().data().features()
      .opt("--checkpoint", "paths.checkpoint", "Graph-stream checkpoint")
      .opt("--segment", "predict.segment", "Segment id (<video_id>/<ordinal>)")
      .opt("--video", "predict.video", "Video id, with --frame")
      .opt("--frame", "predict.frame", "Action start frame, with --video");
  commands.push_back({predict.app, [&](const RunConfig& c) { return cmd_predict(c, out); }});

  auto synth = add("synth", "Generate a synthetic benchmark into --out");
  synth.common()
      .opt("--grammar", "paths.grammar", "Grammar file (overrides --preset)")
      .opt("--preset", "synth.preset", "learnable or recency")
      .opt("--videos", "synth.videos", "Number of videos")
      .opt("--steps", "synth.steps", "Detection steps per video")
      .opt("--train", "synth.train", "Videos in the train split")
      .opt("--val", "synth.val", "Videos in the val split")
      .opt("--embedding-dim", "synth.embedding_dim", "Word-vector dimension")
      .opt("--appearance-accuracy", "synth.appearance_accuracy", "Chance the simulated appearance peak is correct")
      .opt("--tau-grid", "eval.tau_grid", "Anticipation times for appearance score files")
      .opt("--out", "paths.out", "Output directory");
  commands.push_back({synth.app, [&](const RunConfig& c) { return cmd_synth(c, out); }});

  auto fuse = add("fuse", "Train the late-fusion head on two score files and report");
  fuse.common()
      .opt("--graph-scores", "paths.graph_scores", "Graph-stream score file")
      .opt("--appearance-scores", "paths.appearance_scores", "Appearance score file; {tau} expands")
      .opt("--annotations", "paths.annotations", "Action annotation TSV")
      .opt("--splits", "paths.splits", "Split table")
      .opt("--tau", "data.tau_a", "Anticipation time of the score files")
      .opt("--split", "eval.split", "Split to report on")
      .opt("--lr", "train.fusion_learning_rate", "Fusion learning rate")
      .opt("--batch-size", "train.fusion_batch_size", "Fusion batch size")
      .opt("--epochs", "train.fusion_epochs", "Fusion epochs")
      .opt("--patience", "train.patience", "Early-stopping patience in epochs")
      .opt("--out", "paths.out", "Fusion checkpoint to write")
      .opt("--report", "paths.report", "Report TSV to write");
  commands.push_back({fuse.app, [&](const RunConfig& c) { return cmd_fuse(c, out); }});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig config;
    apply_invocation(config, inv);
    for (const auto& cmd : commands) {
      if (cmd.app->parsed()) return cmd.run(config);
    }
    err << "error: no subcommand given\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace egomg
