#include "egomg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <thread>

#include "egomg/io_util.hpp"

namespace egomg {

namespace {

std::vector<Matrix> collect_grads(const ParameterSet& params, const GraphStreamModel::Bound& bound, ad::Tape& tape,
                                  std::vector<const Matrix*>& ptrs) {
  std::vector<Matrix> grads;
  grads.reserve(params.entries().size());
  for (const auto& [name, m] : params.entries()) {
    const ad::Var v = bound.at(name);
    grads.push_back(tape.requires_grad(v.id()) ? v.grad() : Matrix());
  }
  ptrs.assign(grads.size(), nullptr);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != 0) ptrs[i] = &grads[i];
  }
  return grads;
}

SequenceBatch make_batch(std::span<const EncodedSegment> segs, std::span<const std::size_t> order,
                         std::vector<std::size_t>& labels) {
  SequenceBatch batch;
  labels.clear();
  for (std::size_t i : order) {
    batch.sequences.push_back(segs[i].nodes);
    labels.push_back(segs[i].label);
  }
  return batch;
}

void check_finite(double loss, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
  }
}

std::string format_history(std::span<const EpochLog> history) {
  std::string out;
  for (const auto& e : history) {
    if (!out.empty()) out += ';';
    out += std::to_string(e.epoch) + ',' + format_double(e.train_loss) + ',' + format_double(e.val_top1) + ',' +
           format_double(e.val_top5);
  }
  return out;
}

std::pair<double, double> accuracy_pair(const Matrix& scores, std::span<const std::size_t> labels) {
  if (scores.rows == 0) return {0.0, 0.0};
  const std::size_t k5 = std::min<std::size_t>(5, scores.cols);
  return {topk_accuracy(scores, labels, 1), topk_accuracy(scores, labels, k5)};
}

std::vector<std::size_t> labels_of(std::span<const EncodedSegment> segs) {
  std::vector<std::size_t> labels;
  labels.reserve(segs.size());
  for (const auto& s : segs) labels.push_back(s.label);
  return labels;
}

// GCN pretraining on state-node action distributions; returns false when no state has action edges.
bool pretrain_gcn(GraphStreamModel& model, const TrainConfig& config, const ActivityGraph& graph,
                  const StreamInputs& inputs, std::mt19937_64& rng) {
  const std::size_t actions = graph.action_count();
  std::map<std::size_t, std::vector<double>> rows;
  for (const auto& [key, w] : graph.edges) {
    const auto [src, dst] = key;
    if (graph.is_state_node(src) && !graph.is_state_node(dst)) {
      rows.try_emplace(src, actions, 0.0).first->second[dst - graph.state_count()] = w;
    } else if (!graph.is_state_node(src) && graph.is_state_node(dst) && src != dst) {
      rows.try_emplace(dst, actions, 0.0).first->second[src - graph.state_count()] = w;
    }
  }
  if (rows.empty()) return false;

  std::vector<std::size_t> state_rows;
  Matrix targets(rows.size(), actions);
  for (const auto& [node, dist] : rows) {
    std::copy(dist.begin(), dist.end(), targets.row(state_rows.size()).begin());
    state_rows.push_back(node);
  }

  ParameterSet pre;
  pre.add("gcn.w1", model.params().at("gcn.w1"));
  pre.add("gcn.w2", model.params().at("gcn.w2"));
  pre.add("pretrain.w", init_uniform(config.embed_dim, actions, rng));
  pre.add("pretrain.b", Matrix(1, actions));
  AdamState state;
  const AdamOptions opts{config.learning_rate};
  for (std::size_t epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
    ad::Tape t;
    std::vector<ad::Var> vars;
    for (const auto& [name, m] : pre.entries()) vars.push_back(t.variable(m));
    ad::Var h = gcn_forward(inputs.adjacency, t.constant(inputs.features), vars[0], vars[1]);
    ad::Var probs = ad::softmax_rows(affine(ad::gather_rows(h, state_rows), vars[2], vars[3]));
    ad::Var loss = ad::soft_cross_entropy(probs, targets);
    check_finite(loss.value().data[0], epoch, 0);
    t.backward(loss);
    std::vector<Matrix> grads;
    for (const auto& v : vars) grads.push_back(v.grad());
    std::vector<const Matrix*> ptrs;
    for (const auto& g : grads) ptrs.push_back(&g);
    adam_step(pre, ptrs, state, opts);
  }
  model.params().at("gcn.w1") = pre.at("gcn.w1");
  model.params().at("gcn.w2") = pre.at("gcn.w2");
  return true;
}

}  // namespace

std::string to_string(TrainMode m) { return m == TrainMode::Joint ? "joint" : "two_stage"; }

TrainMode parse_train_mode(std::string_view s) {
  if (s == "joint") return TrainMode::Joint;
  if (s == "two_stage") return TrainMode::TwoStage;
  throw std::invalid_argument("unknown training mode '" + std::string(s) + "' (expected joint or two_stage)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(fusion_learning_rate > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (batch_size == 0 || fusion_batch_size == 0) throw std::invalid_argument("batch sizes must be positive");
  if (max_sequence_length == 0) throw std::invalid_argument("max_sequence_length must be positive");
  if (gcn_hidden == 0 || embed_dim == 0 || lstm_hidden == 0) throw std::invalid_argument("layer sizes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
}

void TrainConfig::write(Checkpoint& ckpt) const {
  ckpt.set("train.mode", to_string(mode));
  ckpt.set("train.learning_rate", format_double(learning_rate));
  ckpt.set("train.batch_size", std::to_string(batch_size));
  ckpt.set("train.max_epochs", std::to_string(max_epochs));
  ckpt.set("train.patience", std::to_string(patience));
  ckpt.set("train.seed", std::to_string(seed));
  ckpt.set("train.max_sequence_length", std::to_string(max_sequence_length));
  ckpt.set("train.pretrain_epochs", std::to_string(pretrain_epochs));
  ckpt.set("train.fusion_learning_rate", format_double(fusion_learning_rate));
  ckpt.set("train.fusion_batch_size", std::to_string(fusion_batch_size));
  ckpt.set("train.fusion_epochs", std::to_string(fusion_epochs));
  ckpt.set("train.dropout", format_double(dropout));
}

// Adam -----------------------------------------------------------------------------------

void adam_step(ParameterSet& params, std::span<const Matrix* const> grads, AdamState& state, const AdamOptions& o) {
  auto& entries = params.entries();
  if (grads.size() != entries.size()) throw std::invalid_argument("adam_step: gradient count does not match parameters");
  if (state.m.empty()) {
    for (const auto& [name, p] : entries) {
      state.m.emplace_back(p.rows, p.cols);
      state.v.emplace_back(p.rows, p.cols);
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (grads[i] && !grads[i]->same_shape(entries[i].second)) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" + entries[i].first + "'");
    }
    if (grads[i] && !all_finite(*grads[i])) {
      throw TrainingError("non-finite gradient for parameter '" + entries[i].first + "' at step " +
                          std::to_string(state.step + 1));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!grads[i]) continue;
    auto& p = entries[i].second.data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    const auto& g = grads[i]->data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      p[j] -= o.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + o.epsilon);
    }
  }
}

// Sequence encoding --------------------------------------------------------------------------

SequenceEncoder::SequenceEncoder(const ActivityGraph& graph, std::size_t feature_dim, FeatureFn unseen_features,
                                 std::size_t max_length)
    : graph_(&graph),
      feature_dim_(feature_dim),
      unseen_features_(std::move(unseen_features)),
      max_length_(max_length),
      extra_(0, feature_dim) {
  if (max_length_ == 0) throw std::invalid_argument("max sequence length must be positive");
}

std::size_t SequenceEncoder::row_for(const ManipulationState& s) {
  if (auto node = graph_->find_state(s)) return *node;
  auto it = extra_index_.find(s);
  if (it != extra_index_.end()) return graph_->node_count() + it->second;
  std::vector<double> f = unseen_features_ ? unseen_features_(s) : std::vector<double>(feature_dim_, 0.0);
  if (f.size() != feature_dim_) throw std::invalid_argument("unseen-state features have the wrong width");
  extra_.data.insert(extra_.data.end(), f.begin(), f.end());
  ++extra_.rows;
  extra_index_.emplace(s, extra_.rows - 1);
  return graph_->node_count() + extra_.rows - 1;
}

std::vector<std::size_t> SequenceEncoder::encode(const StateSequence& window) {
  if (window.items.empty()) return {row_for(ManipulationState{})};
  const std::size_t n = window.items.size();
  const std::size_t first = n > max_length_ ? n - max_length_ : 0;
  std::vector<std::size_t> rows;
  rows.reserve(n - first);
  for (std::size_t i = first; i < n; ++i) rows.push_back(row_for(window.items[i].state));
  return rows;
}

std::vector<EncodedSegment> encode_segments(std::span<const EvalSegment> segments, const SequencesByVideo& sequences,
                                            SequenceEncoder& encoder, double fps) {
  std::vector<EncodedSegment> out;
  out.reserve(segments.size());
  for (const auto& seg : segments) {
    auto it = sequences.find(seg.video_id);
    if (it == sequences.end()) throw DataError("segment " + seg.segment_id + " references video without a trace");
    if (seg.label < 0) throw std::invalid_argument("segment " + seg.segment_id + " has no label");
    auto window = window_states(it->second, seg.action_start_frame, seg.anticipation_seconds, seg.observation_seconds, fps);
    out.push_back({seg.segment_id, encoder.encode(window), static_cast<std::size_t>(seg.label)});
  }
  return out;
}

// Graph stream -----------------------------------------------------------------------------------

std::string format_training_log(std::span<const EpochLog> history) {
  std::string out;
  for (const auto& e : history) {
    out += std::to_string(e.epoch) + '\t' + format_double(e.train_loss) + '\t' + format_double(e.val_top1) + '\t' +
           format_double(e.val_top5) + '\n';
  }
  return out;
}

double batch_loss(const GraphStreamModel& model, const StreamInputs& inputs, std::span<const EncodedSegment> batch) {
  ad::Tape t;
  auto bound = model.bind(t);
  auto table = model.embed_nodes(bound, inputs.adjacency, t.constant(inputs.features), t.constant(inputs.extra_features));
  std::vector<std::size_t> order(batch.size()), labels;
  std::iota(order.begin(), order.end(), 0);
  SequenceBatch seqs = make_batch(batch, order, labels);
  return ad::cross_entropy(model.probabilities(bound, model.aggregate(bound, table, seqs)), labels).value().data[0];
}

Matrix score_segments(const GraphStreamModel& model, const StreamInputs& inputs, std::span<const EncodedSegment> segments,
                      std::size_t batch_size, std::size_t threads) {
  const std::size_t actions = model.config().num_actions;
  Matrix out(segments.size(), actions);
  if (segments.empty()) return out;
  const Matrix table = model.embedding_table(inputs.adjacency, inputs.features, inputs.extra_features);
  batch_size = std::max<std::size_t>(batch_size, 1);
  const std::size_t n_batches = (segments.size() + batch_size - 1) / batch_size;

  auto run = [&](std::size_t worker, std::size_t stride) {
    std::vector<std::size_t> order, labels;
    for (std::size_t b = worker; b < n_batches; b += stride) {
      const std::size_t begin = b * batch_size;
      const std::size_t end = std::min(segments.size(), begin + batch_size);
      order.resize(end - begin);
      std::iota(order.begin(), order.end(), begin);
      Matrix scores = model.predict_from_table(table, make_batch(segments, order, labels));
      std::copy(scores.data.begin(), scores.data.end(), out.row(begin).begin());
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, n_batches);
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(run, w, threads);
  }
  return out;
}

GraphTrainResult train_graph_stream(const TrainConfig& config, const ActivityGraph& graph, const StreamInputs& inputs,
                                    std::span<const EncodedSegment> train, std::span<const EncodedSegment> val) {
  config.validate();
  if (train.empty()) throw TrainingError("empty training set");
  if (graph.action_count() == 0) throw TrainingError("graph has no action nodes");
  if (inputs.features.rows != graph.node_count()) {
    throw std::invalid_argument("feature matrix has " + std::to_string(inputs.features.rows) + " rows for " +
                                std::to_string(graph.node_count()) + " graph nodes");
  }
  const ManipulationState null_state{};
  const auto null_node = graph.find_state(null_state);
  bool any_observed = false;
  for (const auto& seg : train) {
    if (seg.label >= graph.action_count()) throw std::invalid_argument("segment " + seg.segment_id + " label out of range");
    if (seg.nodes.empty()) throw std::invalid_argument("segment " + seg.segment_id + " has no states");
    if (!(seg.nodes.size() == 1 && (null_node ? seg.nodes[0] == *null_node : seg.nodes[0] >= graph.node_count()))) {
      any_observed = true;
    }
  }
  if (!any_observed) throw TrainingError("every training segment has an empty observation window");

  ModelConfig mc;
  mc.input_dim = inputs.features.cols;
  mc.gcn_hidden = config.gcn_hidden;
  mc.embed_dim = config.embed_dim;
  mc.lstm_hidden = config.lstm_hidden;
  mc.num_actions = graph.action_count();
  mc.aggregation = config.aggregation;
  mc.use_gcn = config.use_gcn;

  std::mt19937_64 rng(config.seed);
  GraphStreamModel model(mc);
  model.initialize(rng);

  std::vector<std::string> frozen;
  Matrix frozen_table;
  if (config.mode == TrainMode::TwoStage && config.use_gcn) {
    if (pretrain_gcn(model, config, graph, inputs, rng)) {
      frozen.push_back("gcn.");
      frozen_table = model.embedding_table(inputs.adjacency, inputs.features, inputs.extra_features);
    }
  }

  GraphTrainResult result;
  result.model = model;
  AdamState adam;
  const AdamOptions opts{config.learning_rate};
  const auto val_labels = labels_of(val);
  double best_top1 = -1.0;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> labels;
  std::vector<const Matrix*> grad_ptrs;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const auto idx = std::span(order).subspan(start, std::min(config.batch_size, order.size() - start));
      ad::Tape t;
      auto bound = model.bind(t, frozen);
      ad::Var table = frozen.empty() ? model.embed_nodes(bound, inputs.adjacency, t.constant(inputs.features),
                                                         t.constant(inputs.extra_features))
                                     : t.constant(frozen_table);
      SequenceBatch batch = make_batch(train, idx, labels);
      ad::Var agg = model.aggregate(bound, table, batch);
      if (config.dropout > 0.0) {
        Matrix mask(agg.rows(), agg.cols());
        std::bernoulli_distribution keep(1.0 - config.dropout);
        for (auto& m : mask.data) m = keep(rng) ? 1.0 / (1.0 - config.dropout) : 0.0;
        agg = ad::mul(agg, t.constant(std::move(mask)));
      }
      ad::Var loss = ad::cross_entropy(model.probabilities(bound, agg), labels);
      const double value = loss.value().data[0];
      check_finite(value, epoch, batch_no);
      t.backward(loss);
      auto grads = collect_grads(model.params(), bound, t, grad_ptrs);
      adam_step(model.params(), grad_ptrs, adam, opts);
      total += value * static_cast<double>(idx.size());
    }

    EpochLog log{epoch, total / static_cast<double>(train.size()), 0.0, 0.0};
    if (!val.empty()) {
      std::tie(log.val_top1, log.val_top5) = accuracy_pair(score_segments(model, inputs, val), val_labels);
    }
    result.history.push_back(log);

    if (val.empty() || log.val_top1 > best_top1) {
      best_top1 = log.val_top1;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  result.model.save(result.checkpoint);
  config.write(result.checkpoint);
  result.checkpoint.set("train.best_epoch", std::to_string(result.best_epoch));
  result.checkpoint.set("train.epochs_run", std::to_string(result.history.size()));
  result.checkpoint.set("train.history", format_history(result.history));
  return result;
}

// Scores & fusion -----------------------------------------------------------------------------------

std::optional<std::size_t> ScoreTable::find(std::string_view id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return i;
  }
  return std::nullopt;
}

ScoreTable parse_score_text(std::string_view text, const std::string& source) {
  ScoreTable table;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (trim(raw).empty() || raw.front() == '#') continue;
    auto fields = split(raw, '\t');
    if (fields.size() != 2 || fields[0].empty()) throw ParseError(source, line_no, "expected segment_id<TAB>p1,p2,...");
    auto parts = split(fields[1], ',');
    if (table.ids.empty()) {
      table.scores = Matrix(0, parts.size());
    } else if (parts.size() != table.scores.cols) {
      throw ParseError(source, line_no, "expected " + std::to_string(table.scores.cols) + " probabilities, got " +
                                            std::to_string(parts.size()));
    }
    double total = 0.0;
    for (auto p : parts) {
      auto v = parse_double(p);
      if (!v || !std::isfinite(*v) || *v < 0.0) throw ParseError(source, line_no, "bad probability '" + std::string(p) + "'");
      table.scores.data.push_back(*v);
      total += *v;
    }
    if (std::abs(total - 1.0) > 1e-6) throw ParseError(source, line_no, "probabilities sum to " + format_double(total));
    if (!seen.emplace(fields[0]).second) throw ParseError(source, line_no, "duplicate segment id '" + std::string(fields[0]) + "'");
    table.ids.emplace_back(fields[0]);
    ++table.scores.rows;
  }
  return table;
}

ScoreTable load_score_file(const std::filesystem::path& path) { return parse_score_text(read_file(path), path.string()); }

std::string format_scores(const ScoreTable& table) {
  std::string out;
  for (std::size_t r = 0; r < table.ids.size(); ++r) {
    out += table.ids[r];
    out += '\t';
    for (std::size_t c = 0; c < table.scores.cols; ++c) {
      if (c) out += ',';
      out += format_double(table.scores(r, c));
    }
    out += '\n';
  }
  return out;
}

Matrix select_scores(const ScoreTable& table, std::span<const std::string> ids) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < table.ids.size(); ++i) index.emplace(table.ids[i], i);
  Matrix out(ids.size(), table.scores.cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    auto it = index.find(ids[r]);
    if (it == index.end()) throw DataError("no scores for segment '" + ids[r] + "'");
    std::copy(table.scores.row(it->second).begin(), table.scores.row(it->second).end(), out.row(r).begin());
  }
  return out;
}

FusionTrainResult train_fusion(const TrainConfig& config, const ScoreTable& graph_scores,
                               const ScoreTable& appearance_scores, const std::map<std::string, std::size_t>& labels,
                               std::span<const std::string> train_ids, std::span<const std::string> val_ids) {
  config.validate();
  {
    std::set<std::string> a(graph_scores.ids.begin(), graph_scores.ids.end());
    std::set<std::string> b(appearance_scores.ids.begin(), appearance_scores.ids.end());
    if (a != b) throw DataError("segment-id mismatch between graph and appearance score files");
  }
  if (graph_scores.scores.cols != appearance_scores.scores.cols) {
    throw DataError("graph and appearance score files disagree on the number of actions");
  }
  const std::size_t actions = graph_scores.scores.cols;
  auto gather_labels = [&](std::span<const std::string> ids) {
    std::vector<std::size_t> out;
    for (const auto& id : ids) {
      auto it = labels.find(id);
      if (it == labels.end()) throw DataError("no label for segment '" + id + "'");
      if (it->second >= actions) throw DataError("label of segment '" + id + "' exceeds action count");
      out.push_back(it->second);
    }
    return out;
  };

  const Matrix g_train = select_scores(graph_scores, train_ids);
  const Matrix a_train = select_scores(appearance_scores, train_ids);
  const auto y_train = gather_labels(train_ids);
  const Matrix g_val = select_scores(graph_scores, val_ids);
  const Matrix a_val = select_scores(appearance_scores, val_ids);
  const auto y_val = gather_labels(val_ids);

  FusionModel model(actions);
  FusionTrainResult result;
  result.model = model;
  std::mt19937_64 rng(config.seed);
  AdamState adam;
  const AdamOptions opts{config.fusion_learning_rate};
  double best = -1.0;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_ids.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.fusion_epochs && !order.empty(); ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.fusion_batch_size, ++batch_no) {
      const std::size_t n = std::min(config.fusion_batch_size, order.size() - start);
      Matrix gb(n, actions), ab(n, actions);
      std::vector<std::size_t> yb(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = order[start + i];
        std::copy(g_train.row(r).begin(), g_train.row(r).end(), gb.row(i).begin());
        std::copy(a_train.row(r).begin(), a_train.row(r).end(), ab.row(i).begin());
        yb[i] = y_train[r];
      }
      ad::Tape t;
      ad::Var w = t.variable(model.params().at("fusion.w_f"));
      ad::Var b = t.variable(model.params().at("fusion.b_f"));
      ad::Var loss = ad::cross_entropy(model.forward(t, gb, ab, w, b), yb);
      check_finite(loss.value().data[0], epoch, batch_no);
      t.backward(loss);
      const Matrix gw = w.grad(), gbias = b.grad();
      const Matrix* ptrs[] = {&gw, &gbias};
      adam_step(model.params(), ptrs, adam, opts);
      total += loss.value().data[0] * static_cast<double>(n);
    }
    EpochLog log{epoch, total / static_cast<double>(order.size()), 0.0, 0.0};
    if (!val_ids.empty()) std::tie(log.val_top1, log.val_top5) = accuracy_pair(model.predict(g_val, a_val), y_val);
    result.history.push_back(log);
    if (val_ids.empty() || log.val_top1 > best) {
      best = log.val_top1;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  result.model.save(result.checkpoint);
  config.write(result.checkpoint);
  result.checkpoint.set("train.epochs_run", std::to_string(result.history.size()));
  result.checkpoint.set("train.history", format_history(result.history));
  return result;
}

}  // namespace egomg
