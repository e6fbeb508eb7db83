#include "egomg/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "egomg/io_util.hpp"

namespace egomg {

using ad::Var;

namespace {

const char* const kGates[] = {"i", "f", "o", "c"};

std::size_t meta_size(const Checkpoint& ckpt, std::string_view key) {
  auto v = parse_int(ckpt.require(key));
  if (!v || *v < 0) throw std::runtime_error("checkpoint metadata '" + std::string(key) + "' is not a size");
  return static_cast<std::size_t>(*v);
}

LstmVars bind_lstm(const GraphStreamModel::Bound& p) {
  auto g = [&](const char* kind, const char* gate) { return p.at(std::string("lstm.") + kind + "_" + gate); };
  return {g("w", "i"), g("u", "i"), g("b", "i"), g("w", "f"), g("u", "f"), g("b", "f"),
          g("w", "o"), g("u", "o"), g("b", "o"), g("w", "c"), g("u", "c"), g("b", "c")};
}

LstmVars bind_lstm(ad::Tape& t, const LstmParams& p) {
  return {t.constant(p.w_i), t.constant(p.u_i), t.constant(p.b_i), t.constant(p.w_f),
          t.constant(p.u_f), t.constant(p.b_f), t.constant(p.w_o), t.constant(p.u_o),
          t.constant(p.b_o), t.constant(p.w_c), t.constant(p.u_c), t.constant(p.b_c)};
}

}  // namespace

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::Lstm: return "lstm";
    case Aggregation::Mean: return "mean";
    case Aggregation::Terminal: return "terminal";
  }
  return "lstm";
}

Aggregation parse_aggregation(std::string_view s) {
  if (s == "lstm") return Aggregation::Lstm;
  if (s == "mean") return Aggregation::Mean;
  if (s == "terminal") return Aggregation::Terminal;
  throw std::invalid_argument("unknown aggregation '" + std::string(s) + "' (expected lstm, mean or terminal)");
}

void ModelConfig::write(Checkpoint& ckpt) const {
  ckpt.set("model.input_dim", std::to_string(input_dim));
  ckpt.set("model.gcn_hidden", std::to_string(gcn_hidden));
  ckpt.set("model.embed_dim", std::to_string(embed_dim));
  ckpt.set("model.lstm_hidden", std::to_string(lstm_hidden));
  ckpt.set("model.num_actions", std::to_string(num_actions));
  ckpt.set("model.aggregation", to_string(aggregation));
  ckpt.set("model.use_gcn", use_gcn ? "true" : "false");
}

ModelConfig ModelConfig::read(const Checkpoint& ckpt) {
  ModelConfig c;
  c.input_dim = meta_size(ckpt, "model.input_dim");
  c.gcn_hidden = meta_size(ckpt, "model.gcn_hidden");
  c.embed_dim = meta_size(ckpt, "model.embed_dim");
  c.lstm_hidden = meta_size(ckpt, "model.lstm_hidden");
  c.num_actions = meta_size(ckpt, "model.num_actions");
  c.aggregation = parse_aggregation(ckpt.require("model.aggregation"));
  c.use_gcn = ckpt.require("model.use_gcn") == "true";
  return c;
}

// ParameterSet ------------------------------------------------------------------

Matrix& ParameterSet::add(const std::string& name, Matrix value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  entries_.emplace_back(name, std::move(value));
  return entries_.back().second;
}

Matrix& ParameterSet::at(std::string_view name) {
  for (auto& [n, m] : entries_) {
    if (n == name) return m;
  }
  throw std::out_of_range("no parameter '" + std::string(name) + "'");
}

const Matrix& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

Matrix init_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(rows, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& v : m.data) v = dist(rng);
  return m;
}

LstmParams LstmParams::zeros(std::size_t input, std::size_t hidden) {
  LstmParams p;
  for (Matrix* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_c}) *w = Matrix(input, hidden);
  for (Matrix* u : {&p.u_i, &p.u_f, &p.u_o, &p.u_c}) *u = Matrix(hidden, hidden);
  for (Matrix* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_c}) *b = Matrix(1, hidden);
  return p;
}

// Tape-level ----------------------------------------------------------------------

Var gcn_forward(const CsrMatrix& adjacency, Var features, Var w1, Var w2) {
  Var h1 = ad::relu(ad::spmm(adjacency, ad::matmul(features, w1)));
  return ad::spmm(adjacency, ad::matmul(h1, w2));
}

std::pair<Var, Var> lstm_step(Var x, Var h, Var c, const LstmVars& p) {
  auto gate = [&](Var w, Var u, Var b) { return ad::add(ad::add(ad::matmul(x, w), ad::matmul(h, u)), b); };
  Var i = ad::sigmoid(gate(p.w_i, p.u_i, p.b_i));
  Var f = ad::sigmoid(gate(p.w_f, p.u_f, p.b_f));
  Var o = ad::sigmoid(gate(p.w_o, p.u_o, p.b_o));
  Var g = ad::tanh(gate(p.w_c, p.u_c, p.b_c));
  Var c_next = ad::add(ad::mul(f, c), ad::mul(i, g));
  Var h_next = ad::mul(o, ad::tanh(c_next));
  return {h_next, c_next};
}

Var affine(Var x, Var w, Var b) { return ad::add(ad::matmul(x, w), b); }

Var fuse(Var graph_scores, Var appearance_scores, Var w, Var b) {
  if (graph_scores.cols() != appearance_scores.cols() || graph_scores.rows() != appearance_scores.rows()) {
    throw std::invalid_argument("fuse: stream score shapes differ " + graph_scores.value().shape_string() + " vs " +
                                appearance_scores.value().shape_string());
  }
  if (w.rows() != 2 * graph_scores.cols()) {
    throw std::invalid_argument("fuse: W_f expects " + std::to_string(w.rows() / 2) + " actions, scores have " +
                                std::to_string(graph_scores.cols()));
  }
  const Var parts[] = {ad::l2_normalize_rows(graph_scores), ad::l2_normalize_rows(appearance_scores)};
  return ad::softmax_rows(affine(ad::concat_cols(parts), w, b));
}

std::size_t SequenceBatch::max_length() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n = std::max(n, s.size());
  return n;
}

Var aggregate_batch(Var table, const SequenceBatch& batch, Aggregation mode, const LstmVars* lstm) {
  const std::size_t b = batch.size();
  if (b == 0) throw std::invalid_argument("aggregate: empty batch");
  for (const auto& s : batch.sequences) {
    if (s.empty()) throw std::invalid_argument("aggregate: empty sequence");
  }
  ad::Tape& tape = *table.tape();

  if (mode == Aggregation::Terminal) {
    std::vector<std::size_t> last(b);
    for (std::size_t r = 0; r < b; ++r) last[r] = batch.sequences[r].back();
    return ad::gather_rows(table, last);
  }

  const std::size_t steps = batch.max_length();
  std::vector<std::size_t> idx(b);
  std::vector<double> mask(b);
  auto load_step = [&](std::size_t t) {
    bool full = true;
    for (std::size_t r = 0; r < b; ++r) {
      const auto& s = batch.sequences[r];
      const bool live = t < s.size();
      idx[r] = live ? s[t] : s.back();
      mask[r] = live ? 1.0 : 0.0;
      full = full && live;
    }
    return full;
  };

  if (mode == Aggregation::Mean) {
    Var acc;
    std::vector<double> weight(b);
    for (std::size_t t = 0; t < steps; ++t) {
      load_step(t);
      for (std::size_t r = 0; r < b; ++r) weight[r] = mask[r] / static_cast<double>(batch.sequences[r].size());
      Var term = ad::scale_rows(ad::gather_rows(table, idx), weight);
      acc = acc.valid() ? ad::add(acc, term) : term;
    }
    return acc;
  }

  if (!lstm) throw std::invalid_argument("aggregate: LSTM parameters required");
  const std::size_t hidden = lstm->u_i.rows();
  Var h = tape.constant(Matrix(b, hidden));
  Var c = tape.constant(Matrix(b, hidden));
  for (std::size_t t = 0; t < steps; ++t) {
    const bool full = load_step(t);
    auto [h_next, c_next] = lstm_step(ad::gather_rows(table, idx), h, c, *lstm);
    if (full) {
      h = h_next;
      c = c_next;
    } else {
      h = ad::mask_blend(mask, h_next, h);
      c = ad::mask_blend(mask, c_next, c);
    }
  }
  return h;
}

// Value-level -----------------------------------------------------------------------

Matrix gcn_forward(const CsrMatrix& adjacency, const Matrix& features, const GcnParams& params) {
  ad::Tape t;
  return gcn_forward(adjacency, t.constant(features), t.constant(params.w1), t.constant(params.w2)).value();
}

Matrix aggregate(const Matrix& sequence, Aggregation mode, const LstmParams& lstm) {
  ad::Tape t;
  SequenceBatch batch;
  batch.sequences.emplace_back(sequence.rows);
  for (std::size_t i = 0; i < sequence.rows; ++i) batch.sequences[0][i] = i;
  LstmVars vars = bind_lstm(t, lstm);
  return aggregate_batch(t.constant(sequence), batch, mode, &vars).value();
}

Matrix anticipate(const Matrix& aggregate, const AffineHead& head) {
  ad::Tape t;
  return ad::softmax_rows(affine(t.constant(aggregate), t.constant(head.w), t.constant(head.b))).value();
}

Matrix fuse(const Matrix& graph_scores, const Matrix& appearance_scores, const AffineHead& head) {
  ad::Tape t;
  return fuse(t.constant(graph_scores), t.constant(appearance_scores), t.constant(head.w), t.constant(head.b)).value();
}

// GraphStreamModel -------------------------------------------------------------------

GraphStreamModel::GraphStreamModel(ModelConfig config) : config_(config) {
  if (config_.input_dim == 0 || config_.num_actions == 0) {
    throw std::invalid_argument("model config needs input_dim > 0 and num_actions > 0");
  }
  const auto& c = config_;
  if (c.use_gcn) {
    params_.add("gcn.w1", Matrix(c.input_dim, c.gcn_hidden));
    params_.add("gcn.w2", Matrix(c.gcn_hidden, c.embed_dim));
  } else if (c.needs_projection()) {
    params_.add("proj.w", Matrix(c.input_dim, c.embed_dim));
  }
  if (c.aggregation == Aggregation::Lstm) {
    for (const char* g : kGates) {
      params_.add(std::string("lstm.w_") + g, Matrix(c.embed_dim, c.lstm_hidden));
      params_.add(std::string("lstm.u_") + g, Matrix(c.lstm_hidden, c.lstm_hidden));
      params_.add(std::string("lstm.b_") + g, Matrix(1, c.lstm_hidden));
    }
  }
  params_.add("head.w_g", Matrix(c.aggregate_dim(), c.num_actions));
  params_.add("head.b_g", Matrix(1, c.num_actions));
}

void GraphStreamModel::initialize(std::mt19937_64& rng) {
  for (auto& [name, m] : params_.entries()) {
    // Biases start at zero.
    if (m.rows == 1 && (name.find(".b_") != std::string::npos)) {
      m = Matrix(m.rows, m.cols);
    } else {
      m = init_uniform(m.rows, m.cols, rng);
    }
  }
}

GraphStreamModel::Bound GraphStreamModel::bind(ad::Tape& tape, std::span<const std::string> frozen_prefixes) const {
  Bound out;
  for (const auto& [name, m] : params_.entries()) {
    const bool frozen = std::any_of(frozen_prefixes.begin(), frozen_prefixes.end(),
                                    [&](const std::string& p) { return name.starts_with(p); });
    out.emplace(name, frozen ? tape.constant(m) : tape.variable(m));
  }
  return out;
}

Var GraphStreamModel::embed_nodes(const Bound& p, const CsrMatrix& adjacency, Var features, Var extra_features) const {
  auto isolated = [&](Var x) -> Var {
    if (config_.use_gcn) return ad::matmul(ad::relu(ad::matmul(x, p.at("gcn.w1"))), p.at("gcn.w2"));
    if (config_.needs_projection()) return ad::matmul(x, p.at("proj.w"));
    return x;
  };
  Var nodes;
  if (config_.use_gcn) {
    nodes = gcn_forward(adjacency, features, p.at("gcn.w1"), p.at("gcn.w2"));
  } else {
    nodes = isolated(features);
  }
  if (!extra_features.valid() || extra_features.rows() == 0) return nodes;
  const Var parts[] = {nodes, isolated(extra_features)};
  return ad::concat_rows(parts);
}

Var GraphStreamModel::aggregate(const Bound& p, Var table, const SequenceBatch& batch) const {
  if (config_.aggregation == Aggregation::Lstm) {
    LstmVars vars = bind_lstm(p);
    return aggregate_batch(table, batch, config_.aggregation, &vars);
  }
  return aggregate_batch(table, batch, config_.aggregation, nullptr);
}

Var GraphStreamModel::probabilities(const Bound& p, Var agg) const {
  return ad::softmax_rows(affine(agg, p.at("head.w_g"), p.at("head.b_g")));
}

Matrix GraphStreamModel::embedding_table(const CsrMatrix& adjacency, const Matrix& features,
                                         const Matrix& extra_features) const {
  ad::Tape t;
  static const std::string kAll[] = {""};
  Bound p = bind(t, kAll);
  return embed_nodes(p, adjacency, t.constant(features), t.constant(extra_features)).value();
}

Matrix GraphStreamModel::predict_from_table(const Matrix& table, const SequenceBatch& batch) const {
  ad::Tape t;
  static const std::string kAll[] = {""};
  Bound p = bind(t, kAll);
  return probabilities(p, aggregate(p, t.constant(table), batch)).value();
}

Matrix GraphStreamModel::predict(const CsrMatrix& adjacency, const Matrix& features, const Matrix& extra_features,
                                 const SequenceBatch& batch) const {
  return predict_from_table(embedding_table(adjacency, features, extra_features), batch);
}

void GraphStreamModel::save(Checkpoint& ckpt) const {
  ckpt.set("kind", "graph_stream");
  config_.write(ckpt);
  for (const auto& [name, m] : params_.entries()) ckpt.put(name, m);
}

GraphStreamModel GraphStreamModel::load(const Checkpoint& ckpt) {
  if (ckpt.require("kind") != "graph_stream") throw std::runtime_error("checkpoint is not a graph-stream model");
  GraphStreamModel model(ModelConfig::read(ckpt));
  for (auto& [name, m] : model.params_.entries()) {
    const Matrix& stored = ckpt.tensor(name);
    if (!stored.same_shape(m)) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " + stored.shape_string() + ", expected " +
                               m.shape_string());
    }
    m = stored;
  }
  return model;
}

// FusionModel ---------------------------------------------------------------------

FusionModel::FusionModel(std::size_t num_actions) : num_actions_(num_actions) {
  if (num_actions == 0) throw std::invalid_argument("fusion model needs at least one action");
  params_.add("fusion.w_f", Matrix(2 * num_actions, num_actions));
  params_.add("fusion.b_f", Matrix(1, num_actions));
}

Var FusionModel::forward(ad::Tape& tape, const Matrix& graph_scores, const Matrix& appearance_scores, Var w,
                         Var b) const {
  if (graph_scores.cols != num_actions_ || appearance_scores.cols != num_actions_) {
    throw std::invalid_argument("fuse: expected " + std::to_string(num_actions_) + " scores per row, got " +
                                std::to_string(graph_scores.cols) + " and " + std::to_string(appearance_scores.cols));
  }
  return egomg::fuse(tape.constant(graph_scores), tape.constant(appearance_scores), w, b);
}

Matrix FusionModel::predict(const Matrix& graph_scores, const Matrix& appearance_scores) const {
  ad::Tape t;
  return forward(t, graph_scores, appearance_scores, t.constant(params_.at("fusion.w_f")),
                 t.constant(params_.at("fusion.b_f")))
      .value();
}

void FusionModel::save(Checkpoint& ckpt) const {
  ckpt.set("kind", "fusion");
  ckpt.set("model.num_actions", std::to_string(num_actions_));
  for (const auto& [name, m] : params_.entries()) ckpt.put(name, m);
}

FusionModel FusionModel::load(const Checkpoint& ckpt) {
  if (ckpt.require("kind") != "fusion") throw std::runtime_error("checkpoint is not a fusion model");
  FusionModel model(meta_size(ckpt, "model.num_actions"));
  for (auto& [name, m] : model.params_.entries()) {
    const Matrix& stored = ckpt.tensor(name);
    if (!stored.same_shape(m)) throw std::runtime_error("checkpoint tensor '" + name + "' has wrong shape");
    m = stored;
  }
  return model;
}

}  // namespace egomg
