#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <set>

#include "egomg/io_util.hpp"
#include "egomg/synth.hpp"

using namespace egomg;

namespace {

std::size_t grammar_error_line(const std::string& text) {
  try {
    parse_grammar_text(text, "g");
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("preset grammars are valid") {
  CHECK_NOTHROW(learnable_grammar().validate());
  CHECK_NOTHROW(recency_grammar().validate());
  const auto g = learnable_grammar();
  CHECK(g.states.size() == 10);
  CHECK(g.actions.size() == 5);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(g.emissions(i, i % 5) == 1.0);
    CHECK(g.transitions(i, (i + 1) % 10) == doctest::Approx(1.0 / 3.0));
    CHECK(g.transitions(i, i) == 0.0);
  }
}

TEST_CASE("grammar validation rejects broken grammars") {
  auto g = learnable_grammar();
  g.transitions(0, 1) += 0.1;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = learnable_grammar();
  g.transitions(2, 2) = 0.0;
  g.lead_steps = g.min_dwell;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = learnable_grammar();
  g.dropout_rate = 1.5;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = learnable_grammar();
  g.states[0].anticipated_right = std::nullopt;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = learnable_grammar();
  g.states.pop_back();
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("grammar text round-trips") {
  for (const auto& g : {learnable_grammar(), recency_grammar()}) {
    const auto text = format_grammar(g);
    CHECK(text.starts_with("EGO-OMG-GRAMMAR v1\n"));
    const auto back = parse_grammar_text(text, "g");
    CHECK(format_grammar(back) == text);
    CHECK(back.states == g.states);
    CHECK(back.transitions == g.transitions);
  }
}

TEST_CASE("grammar parse errors carry line numbers") {
  CHECK(grammar_error_line("nope\n") == 1);
  CHECK(grammar_error_line("EGO-OMG-GRAMMAR v1\nfps = x\n") == 2);
  CHECK(grammar_error_line("EGO-OMG-GRAMMAR v1\nbogus = 1\n") == 2);
  CHECK(grammar_error_line("EGO-OMG-GRAMMAR v1\nobjects 3\ncup\npan\n") == 2);
  CHECK(grammar_error_line("EGO-OMG-GRAMMAR v1\nobjects 2\ncup\ncup\n") == 4);
}

TEST_CASE("generation is deterministic and well-formed") {
  const auto g = learnable_grammar();
  const auto a = generate_traces(g, 12, 200, 42);
  const auto b = generate_traces(g, 12, 200, 42);
  CHECK(a.traces == b.traces);
  CHECK(a.annotations == b.annotations);
  CHECK_FALSE(generate_traces(g, 12, 200, 43).traces == a.traces);
  REQUIRE(a.traces.videos.size() == 12);
  CHECK(a.traces.videos[0].video_id == "v0000");
  CHECK(a.traces.record_count() == 12 * 200);
  for (const auto& ann : a.annotations) {
    CHECK(ann.action_id >= 0);
    CHECK(ann.start_frame < ann.stop_frame);
  }
  // Generated traces survive a text round trip.
  Vocabulary v;
  const auto text = format_trace(a.traces, a.objects);
  CHECK(format_trace(parse_trace_text(text, "t", v), v) == text);
  CHECK(parse_annotation_text(format_annotations(a.annotations), "a").size() == a.annotations.size());
}

TEST_CASE("noise-free traces recover the sampled chains") {
  const auto g = learnable_grammar();
  const auto d = generate_traces(g, 20, 240, 9);
  const auto seqs = extract_states(filter_contacts(d.traces, {g.history_seconds, g.fps}));
  REQUIRE(seqs.size() == d.chains.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    REQUIRE(seqs[i].items.size() == d.chains[i].items.size());
    for (std::size_t k = 0; k < seqs[i].items.size(); ++k) CHECK(seqs[i].items[k] == d.chains[i].items[k]);
  }
}

TEST_CASE("noisy generation keeps the true contact at rank one") {
  auto g = learnable_grammar();
  g.distractor_rate = 0.8;
  g.dropout_rate = 0.2;
  const auto d = generate_traces(g, 5, 150, 1);
  std::size_t dropped = 0, records = 0;
  for (const auto& v : d.traces.videos) {
    for (const auto& r : v.records) {
      ++records;
      CHECK(std::set(r.contact_right_top5.begin(), r.contact_right_top5.end()).size() == r.contact_right_top5.size());
      CHECK(r.contact_right_top5.size() <= 5);
      if (!r.anticipated_right && !r.anticipated_left) ++dropped;
    }
  }
  CHECK(dropped > 0);
  CHECK(dropped < records);
}

TEST_CASE("grammar graph mirrors the grammar") {
  const auto g = learnable_grammar();
  const auto t = grammar_graph(g);
  CHECK(t.state_count() == 10);
  CHECK(t.action_count() == 5);
  for (std::size_t i = 0; i < t.state_count(); ++i) {
    double out = 0.0;
    for (const auto& [e, w] : t.edges) {
      if (e.first == i && e.second != i && t.is_state_node(e.second)) out += w;
    }
    CHECK(out == doctest::Approx(1.0));
  }
}

TEST_CASE("splits, embeddings and appearance scores") {
  const auto g = learnable_grammar();
  const auto d = generate_traces(g, 10, 60, 2);
  const auto s = sequential_splits(d.traces.videos, 6, 2);
  CHECK(s.videos_in(Split::Train).size() == 6);
  CHECK(s.videos_in(Split::Val) == std::vector<std::string>{"v0006", "v0007"});
  CHECK(s.videos_in(Split::Test).size() == 2);

  const auto e = random_embeddings(g, 7, 3);
  CHECK(e.dimension == 7);
  CHECK(e.find("fridge"));
  CHECK(e.find("door"));
  CHECK(e.find("take"));
  CHECK(format_embeddings(random_embeddings(g, 7, 3)) == format_embeddings(e));

  std::vector<EvalSegment> segs;
  for (int i = 0; i < 2000; ++i) segs.push_back({"v/" + std::to_string(i), "v", 100, 1.0, 60.0, i % 5});
  AppearanceOptions opt;
  opt.accuracy = 0.6;
  const auto a = simulate_appearance_scores(segs, 5, opt);
  CHECK(a.scores == simulate_appearance_scores(segs, 5, opt).scores);
  std::vector<std::size_t> labels;
  for (int i = 0; i < 2000; ++i) labels.push_back(static_cast<std::size_t>(i % 5));
  const double acc = topk_accuracy(a.scores, labels, 1);
  CHECK(acc > 0.5);
  CHECK(acc < 0.8);
  for (std::size_t r = 0; r < a.scores.rows; ++r) {
    double sum = 0.0;
    for (double v : a.scores.row(r)) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  const std::vector<EvalSegment> head(segs.begin(), segs.begin() + 10);
  CHECK(simulate_appearance_scores(head, 5, opt).scores.row(3)[0] == a.scores.row(3)[0]);
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}
