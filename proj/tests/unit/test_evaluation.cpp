#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <random>

#include "egomg/evaluation.hpp"
#include "egomg/io_util.hpp"
#include "egomg/synth.hpp"

using namespace egomg;

namespace {

struct Small {
  SyntheticData synth;
  Dataset data;
  EmbeddingTable embeddings;

  Small() {
    const auto grammar = learnable_grammar();
    synth = generate_traces(grammar, 24, 120, 17);
    auto splits = sequential_splits(synth.traces.videos, 16, 4);
    data = prepare_dataset(synth.traces, synth.objects, synth.annotations, splits,
                           {grammar.history_seconds, grammar.fps});
    embeddings = random_embeddings(grammar, 8, 5);
  }

  GraphStream stream() const {
    StreamSetup setup;
    setup.embeddings = &embeddings;
    return make_graph_stream(data, setup);
  }
};

TrainConfig tiny_config() {
  TrainConfig c;
  c.gcn_hidden = 16;
  c.embed_dim = 8;
  c.lstm_hidden = 8;
  c.learning_rate = 0.01;
  c.max_epochs = 3;
  c.seed = 1;
  return c;
}

}  // namespace

TEST_CASE("segments drop windows that end before the video starts") {
  std::vector<ActionAnnotation> ann{{"v", 10, 20, "cut", "pepper", 0}, {"v", 400, 420, "cut", "pepper", 0}};
  auto set = make_segments(ann, 1.0);
  CHECK(set.dropped == 1);
  REQUIRE(set.segments.size() == 1);
  CHECK(set.segments[0].action_start_frame == 400);
  CHECK(set.segments[0].segment_id == "v/1");
  CHECK(make_segments(ann, 0.0).segments.size() == 2);
  CHECK(make_segments(ann, 0.0).segments[0].segment_id == "v/0");
}

TEST_CASE("top-k accuracy") {
  Matrix s(1, 3);
  s.data = {0.1, 0.5, 0.4};
  const std::vector<std::size_t> one{1}, two{2};
  CHECK(topk_accuracy(s, one, 1) == 1.0);
  CHECK(topk_accuracy(s, two, 1) == 0.0);
  CHECK(topk_accuracy(s, two, 2) == 1.0);
  CHECK_THROWS_AS(topk_accuracy(s, one, 0), std::invalid_argument);
  CHECK_THROWS_AS(topk_accuracy(s, one, 4), std::invalid_argument);

  Matrix u(6, 4, 0.25);
  const std::vector<std::size_t> labels{0, 1, 0, 3, 2, 0};
  CHECK(topk_accuracy(u, labels, 1) == doctest::Approx(0.5));
  CHECK(top_k(u.row(0), 4) == std::vector<std::size_t>{0, 1, 2, 3});

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  Matrix r(50, 6);
  for (double& v : r.data) v = std::floor(d(rng) * 5.0) / 5.0;
  std::vector<std::size_t> lab;
  for (int i = 0; i < 50; ++i) lab.push_back(rng() % 6);
  Matrix t = r;
  for (double& v : t.data) v = std::exp(3.0 * v) - 7.0;
  for (std::size_t k = 1; k <= 6; ++k) CHECK(topk_accuracy(t, lab, k) == topk_accuracy(r, lab, k));
  CHECK(topk_accuracy(r, lab, 6) == 1.0);
}

TEST_CASE("split tables") {
  auto s = parse_splits_text("# c\na\ttrain\nb\tval\nc\ttest\n", "s");
  CHECK(s.of("b") == Split::Val);
  CHECK_FALSE(s.of("d"));
  CHECK(s.videos_in(Split::Test) == std::vector<std::string>{"c"});
  CHECK(parse_splits_text(format_splits(s), "s").videos == s.videos);
  CHECK_THROWS_AS(parse_splits_text("a\ttrain\na\ttest\n", "s"), ParseError);
  CHECK_THROWS_AS(parse_splits_text("a\tdev\n", "s"), ParseError);
}

TEST_CASE("dataset preparation checks video references") {
  Small s;
  CHECK(s.data.sequences.size() == 24);
  CHECK(s.data.actions.size() == 5);
  CHECK(s.data.annotations_in(Split::Val).size() + s.data.annotations_in(Split::Test).size() +
            s.data.annotations_in(Split::Train).size() ==
        s.data.annotations.size());

  auto splits = sequential_splits(s.synth.traces.videos, 16, 4);
  splits.videos["ghost"] = Split::Test;
  CHECK_THROWS_AS(prepare_dataset(s.synth.traces, s.synth.objects, s.synth.annotations, splits), DataError);
  auto ann = s.synth.annotations;
  ann.push_back({"ghost", 10, 20, "take", "cup", -1});
  CHECK_THROWS_AS(prepare_dataset(s.synth.traces, s.synth.objects, ann, {}), DataError);
  const auto all_train = prepare_dataset(s.synth.traces, s.synth.objects, s.synth.annotations, {});
  CHECK(all_train.annotations_in(Split::Train).size() == s.synth.annotations.size());
}

TEST_CASE("reports") {
  EvalReport r;
  r.rows.push_back({"graph", 1.0, 0.5, 0.75, 40});
  r.rows.push_back({"fused", 2.5, 1.0 / 3.0, 1.0, 7});
  const auto tsv = format_report_tsv(r);
  CHECK(tsv == "config\ttau_a\ttop1\ttop5\tn\ngraph\t1\t0.5\t0.75\t40\nfused\t2.5\t0.3333333333333333\t1\t7\n");
  const auto text = render_report(r);
  CHECK(text.find("50.00") != std::string::npos);
  CHECK(text.find("33.33") != std::string::npos);
  CHECK(r.find("fused", 2.5)->n == 7);
  CHECK_FALSE(r.find("fused", 1.0));
  CHECK_THROWS_AS(score_row("graph", 1.0, Matrix(0, 3), {}), DataError);
}

TEST_CASE("grid evaluation") {
  Small s;
  const auto stream = s.stream();
  const auto trained = train_on_dataset(tiny_config(), stream, s.data, 1.0);
  GridOptions opt;
  std::vector<GridScores> scores;
  const auto report = evaluate_grid(trained.model, stream, s.data, opt, {}, nullptr, &scores);
  REQUIRE(report.rows.size() == 6);
  CHECK(scores.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(report.rows[i].tau_a == kDefaultTauGrid[i]);
    CHECK((report.rows[i].top1 >= 0.0 && report.rows[i].top1 <= report.rows[i].top5 && report.rows[i].top5 <= 1.0));
  }
  CHECK(format_report_tsv(evaluate_grid(trained.model, stream, s.data, opt)) == format_report_tsv(report));
  auto threaded = opt;
  threaded.threads = 4;
  CHECK(format_report_tsv(evaluate_grid(trained.model, stream, s.data, threaded)) == format_report_tsv(report));

  auto with_app = opt;
  with_app.appearance = true;
  CHECK_THROWS_AS(evaluate_grid(trained.model, stream, s.data, with_app), DataError);
  auto fused = opt;
  fused.fused = true;
  AppearanceSource source = [&](double tau) {
    auto set = make_segments(s.data.annotations, tau, 60.0, s.data.fps);
    return simulate_appearance_scores(set.segments, s.data.actions.size(), {});
  };
  CHECK_THROWS_AS(evaluate_grid(trained.model, stream, s.data, fused, source), DataError);
  FusionModel fusion(s.data.actions.size());
  fused.appearance = true;
  fused.graph = false;
  const auto both = evaluate_grid(trained.model, stream, s.data, fused, source, &fusion);
  CHECK(both.rows.size() == 12);
  CHECK(both.rows[0].config == "appearance");
  CHECK(both.rows[1].config == "fused");
}

TEST_CASE("zero anticipation observes up to but excluding the action start") {
  const ManipulationState a{0u, {}, {}, {}}, b{1u, {}, {}, {}};
  const StateSequence seq{"v", {{a, 0, 99}, {b, 100, 200}}};
  const auto w = window_states(seq, 100, 0.0, 60.0, 15.0);
  REQUIRE(w.items.size() == 1);
  CHECK(w.items[0].state == a);
  CHECK(w.items[0].end_frame == 99);
  const auto later = window_states(seq, 101, 0.0, 60.0, 15.0);
  REQUIRE(later.items.size() == 2);
  CHECK(later.items[1] == StateSpan{b, 100, 100});
}

TEST_CASE("ablation grid layout") {
  const auto c = ablation_configs();
  REQUIRE(c.size() == 7);
  const char* names[] = {"LSTM-Aggr.",    "Mean-Aggr.",       "Term-State-Class.", "Embedding+GCN",
                         "Embedding+No-GCN", "Identity+GCN", "Identity+No-GCN"};
  for (std::size_t i = 0; i < 7; ++i) CHECK(c[i].name == names[i]);
  CHECK(c[1].aggregation == Aggregation::Mean);
  CHECK(c[2].aggregation == Aggregation::Terminal);
  CHECK_FALSE(c[6].use_gcn);
  CHECK(c[6].source == FeatureSource::Identity);
}

TEST_CASE("ablations run every configuration") {
  Small s;
  auto c = tiny_config();
  c.max_epochs = 1;
  AblationOptions opt;
  opt.threads = 3;
  const auto r = run_ablations(c, s.data, s.embeddings, opt);
  REQUIRE(r.rows.size() == 7);
  CHECK(r.rows[0].top1 == r.rows[3].top1);
  for (const auto& row : r.rows) CHECK(row.n > 0);
  opt.threads = 1;
  CHECK(format_report_tsv(run_ablations(c, s.data, s.embeddings, opt)) == format_report_tsv(r));
}
