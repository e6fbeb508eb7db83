#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <random>

#include "egomg/embedding.hpp"
#include "egomg/io_util.hpp"
#include "egomg/training.hpp"

using namespace egomg;

namespace {

// Four states in a ring; the label of a segment is the action emitted by its last state.
struct Ring {
  ActivityGraph graph;
  StreamInputs inputs;

  Ring() {
    Vocabulary objects;
    std::vector<ManipulationState> states;
    for (const char* n : {"a", "b", "c", "d"}) states.push_back({objects.intern(n), {}, {}, {}});
    StateSequence seq{"v", {}};
    for (int i = 0; i < 12; ++i) seq.items.push_back({states[static_cast<std::size_t>(i % 4)], 10 * i, 10 * i + 9});
    ActionVocabulary actions({{"x", "a"}, {"y", "b"}});
    std::vector<ActionAnnotation> ann;
    for (int i = 0; i < 12; ++i) ann.push_back({"v", 10 * i, 10 * i + 5, "", "", i % 2});
    std::vector<StateSequence> seqs{seq};
    graph = build_graph(seqs, ann, objects, actions);
    inputs.adjacency = normalize_adjacency(graph);
    inputs.features = build_identity_features(graph);
    inputs.extra_features = Matrix(0, graph.node_count());
  }

  std::vector<EncodedSegment> segments(std::size_t n, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::vector<EncodedSegment> out;
    for (std::size_t i = 0; i < n; ++i) {
      EncodedSegment s{"s" + std::to_string(i), {}, 0};
      const std::size_t len = 1 + rng() % 4;
      for (std::size_t k = 0; k < len; ++k) s.nodes.push_back(rng() % 4);
      s.label = s.nodes.back() % 2;
      out.push_back(s);
    }
    return out;
  }
};

TrainConfig small_config() {
  TrainConfig c;
  c.gcn_hidden = 8;
  c.embed_dim = 6;
  c.lstm_hidden = 6;
  c.learning_rate = 0.02;
  c.batch_size = 4;
  c.max_epochs = 40;
  c.patience = 40;
  c.seed = 3;
  return c;
}

ScoreTable one_hot_table(const std::vector<std::string>& ids, const std::vector<std::size_t>& labels, std::size_t n) {
  ScoreTable t{ids, Matrix(ids.size(), n)};
  for (std::size_t i = 0; i < ids.size(); ++i) t.scores(i, labels[i]) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("adam step properties") {
  ParameterSet p;
  p.add("x", Matrix(1, 2, 1.0));
  AdamState st;
  AdamOptions opt;
  opt.learning_rate = 0.1;
  Matrix zero(1, 2);
  const Matrix* g0[] = {&zero};
  adam_step(p, g0, st, opt);
  CHECK(p.at("x").data == std::vector<double>{1.0, 1.0});

  ParameterSet q;
  q.add("x", Matrix(1, 2, 1.0));
  AdamState sq;
  Matrix g(1, 2);
  g.data = {3.0, -0.5};
  const Matrix* g1[] = {&g};
  adam_step(q, g1, sq, opt);
  CHECK(q.at("x")(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(q.at("x")(0, 1) == doctest::Approx(1.1).epsilon(1e-6));

  ParameterSet r;
  r.add("x", Matrix(1, 1, 1.0));
  AdamState sr;
  for (int i = 0; i < 100; ++i) {
    Matrix grad(1, 1, 2.0 * r.at("x")(0, 0));
    const Matrix* gs[] = {&grad};
    adam_step(r, gs, sr, opt);
  }
  CHECK(std::abs(r.at("x")(0, 0)) < 0.5);

  Matrix bad(1, 2, std::nan(""));
  const Matrix* gb[] = {&bad};
  try {
    adam_step(p, gb, st, opt);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
}

TEST_CASE("sequence encoder maps windows to table rows") {
  Ring ring;
  std::size_t calls = 0;
  SequenceEncoder enc(ring.graph, ring.graph.node_count(),
                      [&](const ManipulationState&) {
                        ++calls;
                        return std::vector<double>(ring.graph.node_count(), 0.5);
                      },
                      2);
  const auto& s = ring.graph.states;
  StateSequence w{"v", {{s[0], 0, 1}, {s[1], 2, 3}, {s[2], 4, 5}}};
  CHECK(enc.encode(w) == std::vector<std::size_t>{1, 2});
  const auto empty = enc.encode(StateSequence{"v", {}});
  CHECK(empty == std::vector<std::size_t>{ring.graph.node_count()});
  ManipulationState unseen{{}, 0u, {}, {}};
  StateSequence u{"v", {{unseen, 0, 1}}};
  CHECK(enc.encode(u) == std::vector<std::size_t>{ring.graph.node_count() + 1});
  CHECK(enc.encode(u) == std::vector<std::size_t>{ring.graph.node_count() + 1});
  CHECK(enc.unseen_count() == 2);
  CHECK(calls == 2);
}

TEST_CASE("batched loss equals the mean of per-sample losses") {
  Ring ring;
  std::mt19937_64 rng(1);
  ModelConfig mc;
  mc.input_dim = ring.graph.node_count();
  mc.gcn_hidden = 5;
  mc.embed_dim = 4;
  mc.lstm_hidden = 3;
  mc.num_actions = 2;
  GraphStreamModel m(mc);
  m.initialize(rng);
  const auto segs = ring.segments(9, 2);
  double mean = 0.0;
  for (const auto& s : segs) mean += batch_loss(m, ring.inputs, std::span(&s, 1));
  mean /= static_cast<double>(segs.size());
  CHECK(std::abs(batch_loss(m, ring.inputs, segs) - mean) <= 1e-10);
}

TEST_CASE("overfitting one sample drives the loss near zero") {
  Ring ring;
  auto c = small_config();
  c.learning_rate = 0.05;
  c.max_epochs = 300;
  c.patience = 300;
  const auto one = ring.segments(1, 5);
  auto r = train_graph_stream(c, ring.graph, ring.inputs, one, {});
  CHECK(batch_loss(r.model, ring.inputs, one) < 0.01);

  c.learning_rate = 0.005;
  c.max_epochs = 30;
  r = train_graph_stream(c, ring.graph, ring.inputs, one, {});
  for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i].train_loss <= r.history[i - 1].train_loss);
}

TEST_CASE("training learns the ring task and is bit-reproducible") {
  Ring ring;
  const auto train = ring.segments(64, 7), val = ring.segments(32, 8);
  for (auto mode : {TrainMode::Joint, TrainMode::TwoStage}) {
    auto c = small_config();
    c.mode = mode;
    c.pretrain_epochs = 5;
    const auto a = train_graph_stream(c, ring.graph, ring.inputs, train, val);
    const auto b = train_graph_stream(c, ring.graph, ring.inputs, train, val);
    CHECK(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(b.checkpoint));
    CHECK(a.checkpoint.get("train.best_epoch") == std::to_string(a.best_epoch));
    const Matrix s = score_segments(a.model, ring.inputs, val);
    std::vector<std::size_t> labels;
    for (const auto& v : val) labels.push_back(v.label);
    INFO("mode " << to_string(mode));
    CHECK(topk_accuracy(s, labels, 1) >= 0.95);
  }
}

TEST_CASE("early stopping keeps the best validation epoch") {
  Ring ring;
  auto c = small_config();
  c.patience = 2;
  c.max_epochs = 60;
  const auto r = train_graph_stream(c, ring.graph, ring.inputs, ring.segments(32, 1), ring.segments(16, 2));
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& e : r.history) {
    if (e.val_top1 > best) {
      best = e.val_top1;
      best_epoch = e.epoch;
    }
  }
  CHECK(r.best_epoch == best_epoch);
  CHECK(r.history.size() <= best_epoch + c.patience);
  const auto log = format_training_log(r.history);
  CHECK(std::count(log.begin(), log.end(), '\n') == static_cast<long>(r.history.size()));
}

TEST_CASE("training errors") {
  Ring ring;
  const auto c = small_config();
  CHECK_THROWS_AS(train_graph_stream(c, ring.graph, ring.inputs, {}, {}), TrainingError);
  std::vector<EncodedSegment> empty_windows{{"s", {ring.graph.node_count()}, 0}};
  StreamInputs with_null = ring.inputs;
  with_null.extra_features = Matrix(1, ring.graph.node_count());
  CHECK_THROWS_AS(train_graph_stream(c, ring.graph, with_null, empty_windows, {}), TrainingError);
  ActivityGraph no_actions = ring.graph;
  no_actions.actions = ActionVocabulary();
  CHECK_THROWS_AS(train_graph_stream(c, no_actions, ring.inputs, ring.segments(4, 1), {}), TrainingError);
  auto bad = c;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train_graph_stream(bad, ring.graph, ring.inputs, ring.segments(4, 1), {}), std::invalid_argument);
}

TEST_CASE("scoring is independent of thread count") {
  Ring ring;
  std::mt19937_64 rng(4);
  ModelConfig mc;
  mc.input_dim = ring.graph.node_count();
  mc.gcn_hidden = 5;
  mc.embed_dim = 4;
  mc.lstm_hidden = 3;
  mc.num_actions = 2;
  GraphStreamModel m(mc);
  m.initialize(rng);
  const auto segs = ring.segments(300, 9);
  const Matrix one = score_segments(m, ring.inputs, segs, 64, 1);
  CHECK(score_segments(m, ring.inputs, segs, 64, 4) == one);
  CHECK(score_segments(m, ring.inputs, segs, 64, 7) == one);
}

TEST_CASE("score files") {
  const auto t = parse_score_text("a\t0.25,0.75\nb\t1,0\n", "s");
  CHECK(t.ids == std::vector<std::string>{"a", "b"});
  CHECK(t.scores(0, 1) == 0.75);
  CHECK(parse_score_text(format_scores(t), "s").scores == t.scores);
  CHECK_THROWS_AS(parse_score_text("a\t0.5,0.6\n", "s"), ParseError);
  CHECK_THROWS_AS(parse_score_text("a\t0.5,0.5\nb\t1\n", "s"), ParseError);
  CHECK_THROWS_AS(parse_score_text("a\t0.5,0.5\na\t0.5,0.5\n", "s"), ParseError);
  CHECK_THROWS_AS(parse_score_text("a\t1.5,-0.5\n", "s"), ParseError);
  const std::vector<std::string> ids{"b", "c"};
  CHECK_THROWS_AS(select_scores(t, ids), DataError);
}

TEST_CASE("fusion training") {
  const std::size_t n = 4;
  std::mt19937_64 rng(6);
  std::vector<std::string> ids;
  std::vector<std::size_t> labels;
  std::map<std::string, std::size_t> label_map;
  for (int i = 0; i < 120; ++i) {
    ids.push_back("s" + std::to_string(i));
    labels.push_back(rng() % n);
    label_map[ids.back()] = labels.back();
  }
  const std::vector<std::string> train(ids.begin(), ids.begin() + 80), val(ids.begin() + 80, ids.end());
  auto c = small_config();

  ScoreTable uniform{ids, Matrix(ids.size(), n, 1.0 / n)};
  const auto perfect = one_hot_table(ids, labels, n);
  auto r = train_fusion(c, perfect, uniform, label_map, train, val);
  const Matrix fused = r.model.predict(select_scores(perfect, val), select_scores(uniform, val));
  const std::vector<std::size_t> val_labels(labels.begin() + 80, labels.end());
  CHECK(topk_accuracy(fused, val_labels, 1) == 1.0);
  CHECK(r.model.params().at("fusion.w_f").rows == 2 * n);

  // A noisy graph stream plus an uninformative appearance stream.
  ScoreTable noisy{ids, Matrix(ids.size(), n)};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t peak = (rng() % 10 < 6) ? labels[i] : rng() % n;
    for (std::size_t k = 0; k < n; ++k) noisy.scores(i, k) = k == peak ? 0.55 : 0.15;
  }
  r = train_fusion(c, noisy, uniform, label_map, train, val);
  const double alone = topk_accuracy(select_scores(noisy, val), val_labels, 1);
  const double with = topk_accuracy(r.model.predict(select_scores(noisy, val), select_scores(uniform, val)), val_labels, 1);
  CHECK(with >= alone - 0.02);

  c.fusion_epochs = 0;
  r = train_fusion(c, perfect, uniform, label_map, train, val);
  const Matrix init = r.model.predict(select_scores(perfect, val), select_scores(uniform, val));
  for (double v : init.data) CHECK(v == doctest::Approx(1.0 / n));

  ScoreTable fewer{std::vector<std::string>(ids.begin(), ids.end() - 1), Matrix(ids.size() - 1, n, 1.0 / n)};
  CHECK_THROWS_AS(train_fusion(c, perfect, fewer, label_map, train, val), DataError);
  ScoreTable wider{ids, Matrix(ids.size(), n + 1, 1.0 / (n + 1))};
  CHECK_THROWS_AS(train_fusion(c, perfect, wider, label_map, train, val), DataError);
  auto missing = label_map;
  missing.erase("s0");
  CHECK_THROWS_AS(train_fusion(c, perfect, uniform, missing, train, val), DataError);
}

TEST_CASE("two-stage training without action edges leaves the GCN trainable") {
  Ring ring;
  ActivityGraph bare = ring.graph;
  std::erase_if(bare.edges, [&](const auto& e) { return e.first.first != e.first.second && !bare.is_state_node(e.first.second); });
  StreamInputs inputs = ring.inputs;
  inputs.adjacency = normalize_adjacency(bare);
  auto c = small_config();
  c.max_epochs = 3;
  const auto train = ring.segments(16, 1);
  const auto joint = train_graph_stream(c, bare, inputs, train, {});
  c.mode = TrainMode::TwoStage;
  const auto two = train_graph_stream(c, bare, inputs, train, {});
  CHECK(two.model.params() == joint.model.params());
}
