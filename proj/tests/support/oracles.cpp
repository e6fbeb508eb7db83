#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <tuple>

namespace oracle {

using egomg::ManipulationState;

namespace {

using Key = std::tuple<std::optional<std::string>, std::optional<std::string>, std::optional<std::string>,
                       std::optional<std::string>>;

Key key_of(const ManipulationState& s, const egomg::Vocabulary& v) {
  auto n = [&](const egomg::MaybeObject& o) -> std::optional<std::string> {
    if (!o) return std::nullopt;
    return v.noun(*o);
  };
  return {n(s.contact_right), n(s.contact_left), n(s.anticipated_right), n(s.anticipated_left)};
}

}  // namespace

std::vector<ManipulationState> dedup(const std::vector<ManipulationState>& raw) {
  std::vector<ManipulationState> out;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    if (j + 1 == raw.size() || !(raw[j] == raw[j + 1])) out.push_back(raw[j]);
  }
  return out;
}

egomg::ActivityGraph graph(std::span<const egomg::StateSequence> sequences,
                           std::span<const egomg::ActionAnnotation> annotations, const egomg::Vocabulary& objects,
                           const egomg::ActionVocabulary& actions) {
  std::map<Key, ManipulationState> states;
  for (const auto& seq : sequences) {
    for (const auto& item : seq.items) states.emplace(key_of(item.state, objects), item.state);
  }

  std::map<Key, std::map<Key, double>> trans;
  std::map<Key, double> trans_total;
  for (const auto& seq : sequences) {
    for (std::size_t j = 0; j + 1 < seq.items.size(); ++j) {
      const Key a = key_of(seq.items[j].state, objects);
      trans[a][key_of(seq.items[j + 1].state, objects)] += 1.0;
      trans_total[a] += 1.0;
    }
  }

  std::map<std::string, std::vector<const egomg::ActionAnnotation*>> by_video;
  for (const auto& a : annotations) by_video[a.video_id].push_back(&a);
  std::map<Key, std::map<int, double>> act;
  std::map<Key, double> act_total;
  for (const auto& seq : sequences) {
    for (const auto& item : seq.items) {
      for (const auto* a : by_video[seq.video_id]) {
        const bool overlap = a->start_frame <= item.end_frame && a->stop_frame > item.start_frame;
        if (!overlap) continue;
        const Key k = key_of(item.state, objects);
        act[k][a->action_id] += 1.0;
        act_total[k] += 1.0;
      }
    }
  }

  egomg::ActivityGraph g;
  g.objects = objects;
  g.actions = actions;
  std::map<Key, std::size_t> index;
  for (const auto& [k, s] : states) {
    index[k] = g.states.size();
    g.states.push_back(s);
  }
  const std::size_t z = g.states.size() + actions.size();
  for (std::size_t i = 0; i < z; ++i) g.edges[{i, i}] = 1.0;
  for (const auto& [from, row] : trans) {
    for (const auto& [to, n] : row) g.edges[{index[from], index[to]}] = n / trans_total[from];
  }
  for (const auto& [from, row] : act) {
    for (const auto& [a, n] : row) g.edges[{index[from], g.states.size() + static_cast<std::size_t>(a)}] = n / act_total[from];
  }
  g.rebuild_index();
  return g;
}

RandomDataset random_dataset(std::mt19937_64& rng, std::size_t max_sequences) {
  auto uni = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  RandomDataset d;
  const std::size_t n_objects = uni(1, 6);
  const char* nouns[] = {"cup", "knife", "board", "pan", "fridge:door", "spoon"};
  for (std::size_t i = 0; i < n_objects; ++i) d.objects.intern(nouns[(i * 5) % 6]);
  std::vector<std::pair<std::string, std::string>> pairs;
  const char* verbs[] = {"take", "put", "cut", "wash", "open"};
  const std::size_t n_actions = uni(1, 8);
  for (std::size_t i = 0; i < n_actions; ++i) pairs.emplace_back(verbs[uni(0, 4)], d.objects.noun(static_cast<egomg::ObjectId>(uni(0, n_objects - 1))));
  d.actions = egomg::ActionVocabulary(pairs);

  auto slot = [&]() -> egomg::MaybeObject {
    if (uni(0, 2) == 0) return std::nullopt;
    return static_cast<egomg::ObjectId>(uni(0, n_objects - 1));
  };
  std::vector<ManipulationState> pool(uni(1, 30));
  for (auto& s : pool) s = {slot(), slot(), slot(), slot()};

  const std::size_t n_seq = uni(0, max_sequences);
  for (std::size_t v = 0; v < n_seq; ++v) {
    std::vector<ManipulationState> raw(uni(0, 12));
    for (auto& s : raw) s = pool[uni(0, pool.size() - 1)];
    egomg::StateSequence seq{"vid" + std::to_string(v), {}};
    egomg::Frame f = static_cast<egomg::Frame>(uni(0, 5)) * 2;
    for (const auto& s : dedup(raw)) {
      const egomg::Frame len = static_cast<egomg::Frame>(uni(0, 20)) * 2;
      seq.items.push_back({s, f, f + len});
      f += len + 2;
    }
    const std::size_t n_ann = seq.items.empty() ? uni(0, 1) : uni(0, 4);
    for (std::size_t k = 0; k < n_ann; ++k) {
      const egomg::Frame start = static_cast<egomg::Frame>(uni(0, static_cast<std::size_t>(f) + 4));
      const egomg::Frame stop = start + static_cast<egomg::Frame>(uni(1, 40));
      const int id = static_cast<int>(uni(0, d.actions.size() - 1));
      d.annotations.push_back({seq.video_id, start, stop, d.actions.verb(id), d.actions.noun(id), id});
    }
    d.sequences.push_back(std::move(seq));
  }
  std::shuffle(d.sequences.begin(), d.sequences.end(), rng);
  return d;
}

std::string compare_graphs(const egomg::ActivityGraph& a, const egomg::ActivityGraph& b, double tolerance) {
  if (!(a.actions == b.actions)) return "action vocabularies differ";
  if (a.states != b.states) {
    return "state nodes differ (" + std::to_string(a.states.size()) + " vs " + std::to_string(b.states.size()) + ")";
  }
  if (a.edges.size() != b.edges.size()) {
    return "edge counts differ (" + std::to_string(a.edges.size()) + " vs " + std::to_string(b.edges.size()) + ")";
  }
  for (auto ia = a.edges.begin(), ib = b.edges.begin(); ia != a.edges.end(); ++ia, ++ib) {
    if (ia->first != ib->first) {
      return "edge sets differ at (" + std::to_string(ia->first.first) + "," + std::to_string(ia->first.second) + ")";
    }
    if (std::abs(ia->second - ib->second) > tolerance) {
      return "weight of (" + std::to_string(ia->first.first) + "," + std::to_string(ia->first.second) + ") differs";
    }
  }
  return {};
}

}  // namespace oracle
