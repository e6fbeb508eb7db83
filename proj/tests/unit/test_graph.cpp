#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "egomg/graph.hpp"
#include "egomg/io_util.hpp"
#include "oracles.hpp"

using namespace egomg;

namespace {

struct Toy {
  Vocabulary objects;
  ManipulationState a, b, c;
  ActionVocabulary actions{{{"cut", "pepper"}, {"wash", "pan"}}};

  Toy() {
    a.contact_right = objects.intern("knife");
    b.contact_right = objects.intern("pepper");
    c.contact_left = objects.intern("pan");
  }
  StateSequence seq(std::string id, std::vector<ManipulationState> states) const {
    StateSequence s{std::move(id), {}};
    Frame f = 0;
    for (const auto& st : states) {
      s.items.push_back({st, f, f + 9});
      f += 10;
    }
    return s;
  }
};

double row_sum(const CsrMatrix& m, std::size_t r) {
  double s = 0.0;
  for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) s += m.values[k];
  return s;
}

}  // namespace

TEST_CASE("transitions count pooled successors") {
  Toy t;
  std::vector<StateSequence> one{t.seq("v", {t.a, t.b, t.a, t.b})};
  auto e = estimate_transitions(one);
  CHECK(e.at({t.a, t.b}) == 1.0);
  CHECK(e.at({t.b, t.a}) == 1.0);
  CHECK(e.size() == 2);

  std::vector<StateSequence> two{t.seq("v", {t.a, t.b}), t.seq("w", {t.a, t.c})};
  e = estimate_transitions(two);
  CHECK(e.at({t.a, t.b}) == 0.5);
  CHECK(e.at({t.a, t.c}) == 0.5);

  std::vector<StateSequence> single{t.seq("v", {t.a})};
  CHECK(estimate_transitions(single).empty());
}

TEST_CASE("action edges come from overlapping annotations") {
  Toy t;
  std::vector<StateSequence> seqs{t.seq("v", {t.a, t.b, t.a, t.b})};
  // b spans [10,19] and [30,39]
  std::vector<ActionAnnotation> ann{
      {"v", 12, 15, "cut", "pepper", 0}, {"v", 30, 31, "cut", "pepper", 0}, {"v", 39, 45, "wash", "pan", 1}};
  auto e = estimate_action_edges(seqs, ann);
  CHECK(e.at({t.b, 0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(e.at({t.b, 1}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_FALSE(e.contains({t.a, 1}));

  std::vector<ActionAnnotation> stop_is_exclusive{{"v", 0, 10, "cut", "pepper", 0}};
  e = estimate_action_edges(seqs, stop_is_exclusive);
  CHECK(e.contains({t.a, 0}));
  CHECK_FALSE(e.contains({t.b, 0}));

  std::vector<ActionAnnotation> unknown{{"x", 0, 10, "cut", "pepper", 0}};
  CHECK_THROWS_AS(estimate_action_edges(seqs, unknown), DataError);
}

TEST_CASE("three-node example graph") {
  Vocabulary objects;
  ManipulationState a{objects.intern("knife"), {}, {}, {}};
  ManipulationState b{objects.intern("pepper"), {}, {}, {}};
  std::vector<StateSequence> seqs{{"v", {{a, 0, 9}, {b, 10, 19}}}};
  ActionVocabulary actions(std::vector<std::pair<std::string, std::string>>{{"cut", "pepper"}});
  std::vector<ActionAnnotation> ann{{"v", 12, 15, "cut", "pepper", 0}};
  const auto g = build_graph(seqs, ann, objects, actions);
  REQUIRE(g.node_count() == 3);
  CHECK(g.states == std::vector<ManipulationState>{a, b});
  CHECK(g.edges.at({0, 0}) == 1.0);
  CHECK(g.edges.at({1, 1}) == 1.0);
  CHECK(g.edges.at({2, 2}) == 1.0);
  CHECK(g.edges.at({0, 1}) == 1.0);
  CHECK(g.edges.at({1, 2}) == 1.0);
  CHECK(g.edges.size() == 5);
  CHECK(oracle::compare_graphs(g, oracle::graph(seqs, ann, objects, actions), 0.0).empty());

  GraphOptions reversed{ActionEdgeDirection::ActionToState};
  const auto r = build_graph(seqs, ann, objects, actions, reversed);
  CHECK(r.edges.at({2, 1}) == 1.0);
  CHECK_FALSE(r.edges.contains({1, 2}));
}

TEST_CASE("graph without annotations or sequences") {
  Toy t;
  std::vector<StateSequence> seqs{t.seq("v", {t.a, t.b}), t.seq("w", {t.b, t.a})};
  const auto g = build_graph(seqs, {}, t.objects, t.actions);
  CHECK(g.state_count() == 2);
  for (const auto& [e, w] : g.edges) {
    if (e.first != e.second) CHECK((g.is_state_node(e.first) && g.is_state_node(e.second)));
  }
  std::vector<std::string> warnings;
  const auto empty = build_graph({}, {}, t.objects, t.actions, {}, &warnings);
  CHECK(empty.state_count() == 0);
  CHECK(empty.node_count() == 2);
  CHECK(warnings.size() == 1);
}

TEST_CASE("same state in two videos is one node") {
  Toy t;
  std::vector<StateSequence> seqs{t.seq("v", {t.a}), t.seq("w", {t.a})};
  CHECK(build_graph(seqs, {}, t.objects, t.actions).state_count() == 1);
}

TEST_CASE("graph matches the brute-force oracle and is permutation invariant") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    auto d = oracle::random_dataset(rng, 40);
    const auto g = build_graph(d.sequences, d.annotations, d.objects, d.actions);
    const auto o = oracle::graph(d.sequences, d.annotations, d.objects, d.actions);
    INFO("trial " << trial);
    CHECK(oracle::compare_graphs(g, o, 1e-12) == "");

    auto shuffled = d.sequences;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto ann = d.annotations;
    std::shuffle(ann.begin(), ann.end(), rng);
    CHECK(build_graph(shuffled, ann, d.objects, d.actions) == g);

    for (std::size_t i = 0; i < g.state_count(); ++i) {
      double trans = 0.0, act = 0.0;
      bool has_trans = false, has_act = false;
      for (const auto& [e, w] : g.edges) {
        CHECK((w >= 0.0 && w <= 1.0));
        if (e.first != i || e.second == i) continue;
        if (g.is_state_node(e.second)) {
          trans += w;
          has_trans = true;
        } else {
          act += w;
          has_act = true;
        }
      }
      if (has_trans) CHECK(std::abs(trans - 1.0) <= 1e-9);
      if (has_act) CHECK(std::abs(act - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("normalized adjacency is row stochastic") {
  Toy t;
  std::vector<StateSequence> seqs{t.seq("v", {t.a, t.b})};
  auto a = normalize_adjacency(build_graph(seqs, {}, t.objects, t.actions));
  CHECK(a.at(0, 0) == 0.5);
  CHECK(a.at(0, 1) == 0.5);
  CHECK(a.at(1, 1) == 1.0);
  CHECK(a.at(2, 2) == 1.0);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto d = oracle::random_dataset(rng, 60);
    const auto m = normalize_adjacency(build_graph(d.sequences, d.annotations, d.objects, d.actions));
    for (std::size_t r = 0; r < m.rows; ++r) {
      CHECK(std::abs(row_sum(m, r) - 1.0) <= 1e-12);
    }
    CHECK(std::all_of(m.values.begin(), m.values.end(), [](double v) { return v >= 0.0; }));
  }
}

TEST_CASE("graph serialization round-trips") {
  Toy t;
  ActivityGraph empty;
  CHECK(deserialize_graph(serialize_graph(empty)) == empty);

  std::vector<StateSequence> seqs{t.seq("v", {t.a, t.b, t.c, t.a})};
  std::vector<ActionAnnotation> ann{{"v", 0, 40, "cut", "pepper", 0}, {"v", 0, 12, "wash", "pan", 1}};
  const auto g = build_graph(seqs, ann, t.objects, t.actions);
  CHECK(serialize_graph(g).starts_with("EGO-OMG-GRAPH v1\n"));
  const auto back = deserialize_graph(serialize_graph(g));
  CHECK(back == g);
  CHECK(serialize_graph(back) == serialize_graph(g));
}

TEST_CASE("large random graph round-trips bit-exactly") {
  std::mt19937_64 rng(99);
  ActivityGraph g;
  for (int i = 0; i < 40; ++i) g.objects.intern("obj" + std::to_string(i));
  std::vector<std::pair<std::string, std::string>> acts;
  for (int i = 0; i < 100; ++i) acts.emplace_back("verb" + std::to_string(i / 10), "obj" + std::to_string(i % 40));
  std::sort(acts.begin(), acts.end());
  acts.erase(std::unique(acts.begin(), acts.end()), acts.end());
  g.actions = ActionVocabulary(acts);
  std::set<std::string> keys;
  while (g.states.size() + g.actions.size() < 10000) {
    auto pick = [&]() -> MaybeObject {
      if (rng() % 3 == 0) return std::nullopt;
      return static_cast<ObjectId>(rng() % 40);
    };
    ManipulationState s{pick(), pick(), pick(), pick()};
    if (keys.insert(canonical_key(s, g.objects)).second) g.states.push_back(s);
  }
  std::sort(g.states.begin(), g.states.end(),
            [&](const auto& x, const auto& y) { return canonical_less(x, y, g.objects); });
  std::uniform_real_distribution<double> w(0.0, 1.0);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    g.edges[{i, i}] = 1.0;
    g.edges[{i, rng() % g.node_count()}] = w(rng);
  }
  g.rebuild_index();
  REQUIRE(g.node_count() == 10000);
  CHECK(deserialize_graph(serialize_graph(g)) == g);
}

TEST_CASE("graph file errors") {
  CHECK_THROWS_AS(deserialize_graph("EGO-OMG-GRAPH v2\n"), ParseError);
  CHECK_THROWS_AS(deserialize_graph("nonsense\n"), ParseError);
  Toy t;
  std::vector<StateSequence> seqs{t.seq("v", {t.a, t.b})};
  auto text = serialize_graph(build_graph(seqs, {}, t.objects, t.actions));
  const auto pos = text.find("knife");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 5, "knifx");
  CHECK_THROWS_AS(deserialize_graph(text), ParseError);
}
