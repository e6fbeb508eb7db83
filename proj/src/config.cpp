#include "egomg/config.hpp"

#include <charconv>
#include <cmath>

#include "egomg/io_util.hpp"
#include "egomg/models.hpp"

namespace egomg {

const std::vector<std::pair<std::string, std::string>>& RunConfig::defaults() {
  static const std::vector<std::pair<std::string, std::string>> table{
      {"paths.traces", ""},
      {"paths.annotations", ""},
      {"paths.splits", ""},
      {"paths.embeddings", ""},
      {"paths.graph", ""},
      {"paths.checkpoint", ""},
      {"paths.fusion_checkpoint", ""},
      {"paths.graph_scores", ""},
      {"paths.appearance_scores", ""},
      {"paths.grammar", ""},
      {"paths.out", ""},
      {"paths.report", ""},
      {"paths.scores_out", ""},
      {"paths.log", ""},
      {"data.fps", "15"},
      {"data.history_seconds", "7"},
      {"data.observation_seconds", "60"},
      {"data.tau_a", "1"},
      {"graph.action_edge_direction", "state_to_action"},
      {"features.source", "embedding"},
      {"features.count_duplicate_nouns", "false"},
      {"train.mode", "joint"},
      {"train.aggregation", "lstm"},
      {"train.use_gcn", "true"},
      {"train.gcn_hidden", "256"},
      {"train.embed_dim", "128"},
      {"train.lstm_hidden", "128"},
      {"train.learning_rate", "7e-5"},
      {"train.batch_size", "16"},
      {"train.max_epochs", "50"},
      {"train.patience", "5"},
      {"train.max_sequence_length", "128"},
      {"train.pretrain_epochs", "50"},
      {"train.fusion_learning_rate", "0.01"},
      {"train.fusion_batch_size", "16"},
      {"train.fusion_epochs", "30"},
      {"train.dropout", "0"},
      {"eval.tau_grid", "5,2.5,1.5,1,0.5,0"},
      {"eval.split", "test"},
      {"eval.configs", "graph"},
      {"predict.segment", ""},
      {"predict.video", ""},
      {"predict.frame", ""},
      {"synth.preset", "learnable"},
      {"synth.videos", "250"},
      {"synth.steps", "240"},
      {"synth.train", "180"},
      {"synth.val", "20"},
      {"synth.embedding_dim", "32"},
      {"synth.appearance_accuracy", "0.5"},
      {"run.seed", "0"},
      {"run.threads", "1"},
  };
  return table;
}

RunConfig::RunConfig() {
  for (const auto& [k, v] : defaults()) values_.emplace(k, v);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::load_text(std::string_view text, const std::string& source) {
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'section.key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (!values_.contains(key)) throw ConfigError(where + "unknown config key '" + key + "'");
    values_[key] = std::string(trim(line.substr(eq + 1)));
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  load_text(read_file(path), path.string());
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  auto v = parse_double(str(key));
  if (!v || !std::isfinite(*v)) throw ConfigError(key + ": expected a number, got '" + str(key) + "'");
  return *v;
}

std::size_t RunConfig::count(const std::string& key) const {
  auto v = parse_int(str(key));
  if (!v || *v < 0) throw ConfigError(key + ": expected a non-negative integer, got '" + str(key) + "'");
  return static_cast<std::size_t>(*v);
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const std::string& s = str(key);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": expected an unsigned integer, got '" + s + "'");
  return v;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& s = str(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (auto part : split(str(key), ',')) {
    auto v = parse_double(trim(part));
    if (!v || !std::isfinite(*v)) throw ConfigError(key + ": bad number '" + std::string(part) + "'");
    out.push_back(*v);
  }
  return out;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  try {
    c.mode = parse_train_mode(str("train.mode"));
    c.aggregation = parse_aggregation(str("train.aggregation"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.use_gcn = flag("train.use_gcn");
  c.gcn_hidden = count("train.gcn_hidden");
  c.embed_dim = count("train.embed_dim");
  c.lstm_hidden = count("train.lstm_hidden");
  c.learning_rate = real("train.learning_rate");
  c.batch_size = count("train.batch_size");
  c.max_epochs = count("train.max_epochs");
  c.patience = count("train.patience");
  c.seed = u64("run.seed");
  c.max_sequence_length = count("train.max_sequence_length");
  c.pretrain_epochs = count("train.pretrain_epochs");
  c.fusion_learning_rate = real("train.fusion_learning_rate");
  c.fusion_batch_size = count("train.fusion_batch_size");
  c.fusion_epochs = count("train.fusion_epochs");
  c.dropout = real("train.dropout");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

FilterOptions RunConfig::filter_options() const {
  FilterOptions f{real("data.history_seconds"), real("data.fps")};
  if (!(f.fps > 0.0) || !(f.history_seconds > 0.0)) throw ConfigError("data.fps and data.history_seconds must be positive");
  return f;
}

}  // namespace egomg
