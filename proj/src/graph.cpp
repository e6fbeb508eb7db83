#include "egomg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <unordered_map>

#include "egomg/io_util.hpp"

namespace egomg {

namespace {

constexpr std::string_view kGraphHeader = "EGO-OMG-GRAPH v1";

std::string format_weight(double w) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", w);
  return buf;
}

}  // namespace

std::optional<std::size_t> ActivityGraph::find_state(const ManipulationState& s) const {
  if (index_.size() != states.size()) {
    auto it = std::find(states.begin(), states.end(), s);
    if (it == states.end()) return std::nullopt;
    return static_cast<std::size_t>(it - states.begin());
  }
  auto it = index_.find(s);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void ActivityGraph::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < states.size(); ++i) index_.emplace(states[i], i);
}

TransitionEdges estimate_transitions(std::span<const StateSequence> sequences) {
  std::map<ManipulationState, std::map<ManipulationState, std::size_t>> counts;
  for (const auto& seq : sequences) {
    for (std::size_t i = 0; i + 1 < seq.items.size(); ++i) {
      const auto& from = seq.items[i].state;
      const auto& to = seq.items[i + 1].state;
      if (from == to) {
        throw std::invalid_argument("estimate_transitions: consecutive duplicate state in video " + seq.video_id);
      }
      ++counts[from][to];
    }
  }
  TransitionEdges edges;
  for (const auto& [from, row] : counts) {
    std::size_t total = 0;
    for (const auto& [to, n] : row) total += n;
    for (const auto& [to, n] : row) {
      edges.emplace(std::make_pair(from, to), static_cast<double>(n) / static_cast<double>(total));
    }
  }
  return edges;
}

ActionEdges estimate_action_edges(std::span<const StateSequence> sequences,
                                  std::span<const ActionAnnotation> annotations) {
  std::unordered_map<std::string, const StateSequence*> by_video;
  for (const auto& seq : sequences) by_video.emplace(seq.video_id, &seq);

  std::map<ManipulationState, std::map<int, std::size_t>> counts;
  for (const auto& a : annotations) {
    auto it = by_video.find(a.video_id);
    if (it == by_video.end()) throw DataError("annotation references unknown video_id '" + a.video_id + "'");
    if (a.action_id < 0) throw std::invalid_argument("annotation without action id in video " + a.video_id);
    const auto& items = it->second->items;
    auto first = std::lower_bound(items.begin(), items.end(), a.start_frame,
                                  [](const StateSpan& s, Frame f) { return s.end_frame < f; });
    for (auto item = first; item != items.end() && item->start_frame < a.stop_frame; ++item) {
      ++counts[item->state][a.action_id];
    }
  }

  ActionEdges edges;
  for (const auto& [state, row] : counts) {
    std::size_t total = 0;
    for (const auto& [action, n] : row) total += n;
    for (const auto& [action, n] : row) {
      edges.emplace(std::make_pair(state, action), static_cast<double>(n) / static_cast<double>(total));
    }
  }
  return edges;
}

ActivityGraph build_graph(std::span<const StateSequence> sequences, std::span<const ActionAnnotation> annotations,
                          const Vocabulary& objects, const ActionVocabulary& actions, const GraphOptions& options,
                          std::vector<std::string>* warnings) {
  ActivityGraph g;
  g.objects = objects;
  g.actions = actions;

  std::vector<ManipulationState> states;
  for (const auto& seq : sequences) {
    for (const auto& item : seq.items) states.push_back(item.state);
  }
  std::sort(states.begin(), states.end());
  states.erase(std::unique(states.begin(), states.end()), states.end());
  std::sort(states.begin(), states.end(),
            [&](const auto& a, const auto& b) { return canonical_less(a, b, objects); });
  g.states = std::move(states);
  g.rebuild_index();

  if (g.states.empty() && warnings) {
    warnings->push_back("graph has no state nodes (" + std::to_string(g.action_count()) + " action nodes only)");
  }

  for (std::size_t i = 0; i < g.node_count(); ++i) g.edges[{i, i}] = 1.0;

  for (const auto& [key, w] : estimate_transitions(sequences)) {
    g.edges[{*g.find_state(key.first), *g.find_state(key.second)}] = w;
  }
  for (const auto& a : annotations) {
    if (a.action_id < 0 || static_cast<std::size_t>(a.action_id) >= actions.size()) {
      throw std::invalid_argument("annotation action id out of range for video " + a.video_id);
    }
  }
  for (const auto& [key, w] : estimate_action_edges(sequences, annotations)) {
    const std::size_t s = *g.find_state(key.first);
    const std::size_t a = g.action_node(key.second);
    if (options.action_edge_direction == ActionEdgeDirection::StateToAction) {
      g.edges[{s, a}] = w;
    } else {
      g.edges[{a, s}] = w;
    }
  }
  return g;
}

CsrMatrix normalize_adjacency(const ActivityGraph& graph) {
  const std::size_t z = graph.node_count();
  std::vector<double> row_sum(z, 0.0);
  for (const auto& [key, w] : graph.edges) row_sum[key.first] += w;

  CsrMatrix m;
  m.rows = m.cols = z;
  m.row_ptr.assign(z + 1, 0);
  for (const auto& [key, w] : graph.edges) ++m.row_ptr[key.first + 1];
  for (std::size_t r = 0; r < z; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  m.col_idx.resize(graph.edges.size());
  m.values.resize(graph.edges.size());
  // std::map iteration is ordered by (src, dst), so each row fills in column order.
  std::vector<std::size_t> cursor(m.row_ptr.begin(), m.row_ptr.end() - 1);
  for (const auto& [key, w] : graph.edges) {
    const std::size_t k = cursor[key.first]++;
    m.col_idx[k] = key.second;
    m.values[k] = w / row_sum[key.first];
  }
  return m;
}

std::string serialize_graph(const ActivityGraph& g) {
  std::string out;
  out += kGraphHeader;
  out += '\n';
  out += "objects\t" + std::to_string(g.objects.size()) + '\n';
  for (std::size_t i = 0; i < g.objects.size(); ++i) {
    out += std::to_string(i) + '\t' + g.objects.noun(static_cast<ObjectId>(i)) + '\n';
  }
  out += "actions\t" + std::to_string(g.actions.size()) + '\n';
  for (std::size_t i = 0; i < g.actions.size(); ++i) {
    const int id = static_cast<int>(i);
    out += std::to_string(i) + '\t' + g.actions.verb(id) + '\t' + g.actions.noun(id) + '\n';
  }
  out += "nodes\t" + std::to_string(g.node_count()) + '\n';
  for (std::size_t i = 0; i < g.states.size(); ++i) {
    out += std::to_string(i) + "\tS\t" + canonical_key(g.states[i], g.objects) + '\n';
  }
  for (std::size_t a = 0; a < g.actions.size(); ++a) {
    out += std::to_string(g.states.size() + a) + "\tA\t" + std::to_string(a) + '\n';
  }
  out += "edges\t" + std::to_string(g.edges.size()) + '\n';
  for (const auto& [key, w] : g.edges) {
    out += std::to_string(key.first) + '\t' + std::to_string(key.second) + '\t' + format_weight(w) + '\n';
  }
  out += "checksum\t" + to_hex64(fnv1a64(out)) + '\n';
  return out;
}

ActivityGraph deserialize_graph(std::string_view text, const std::string& source) {
  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) -> ParseError { return ParseError(source, pos + 1, what); };
  auto next = [&]() -> std::string_view {
    if (pos >= lines.size()) throw ParseError(source, pos + 1, "unexpected end of file");
    return lines[pos];
  };
  auto section = [&](std::string_view name) -> std::size_t {
    auto f = split(next(), '\t');
    if (f.size() != 2 || f[0] != name) throw fail("expected '" + std::string(name) + "\\t<count>' section header");
    auto n = parse_int(f[1]);
    if (!n || *n < 0) throw fail("bad count in '" + std::string(name) + "' header");
    ++pos;
    return static_cast<std::size_t>(*n);
  };
  auto index_field = [&](std::string_view s, std::size_t expected) {
    auto v = parse_int(s);
    if (!v || *v != static_cast<long long>(expected)) {
      throw fail("expected index " + std::to_string(expected) + ", got '" + std::string(s) + "'");
    }
  };

  if (lines.empty()) throw ParseError(source, 1, "empty graph file");
  if (lines[0] != kGraphHeader) {
    if (lines[0].starts_with("EGO-OMG-GRAPH")) throw ParseError(source, 1, "unsupported graph version '" + std::string(lines[0]) + "'");
    throw ParseError(source, 1, "missing EGO-OMG-GRAPH header");
  }
  ++pos;

  ActivityGraph g;
  const std::size_t n_objects = section("objects");
  for (std::size_t i = 0; i < n_objects; ++i, ++pos) {
    auto f = split(next(), '\t');
    if (f.size() != 2) throw fail("object line needs 2 fields");
    index_field(f[0], i);
    if (f[1].empty() || g.objects.find(f[1])) throw fail("empty or duplicate object noun");
    g.objects.intern(f[1]);
  }

  const std::size_t n_actions = section("actions");
  std::vector<std::pair<std::string, std::string>> actions;
  for (std::size_t i = 0; i < n_actions; ++i, ++pos) {
    auto f = split(next(), '\t');
    if (f.size() != 3) throw fail("action line needs 3 fields");
    index_field(f[0], i);
    if (f[1].empty() || f[2].empty()) throw fail("empty verb or noun");
    actions.emplace_back(f[1], f[2]);
  }
  g.actions = ActionVocabulary(actions);
  if (g.actions.entries() != actions) throw ParseError(source, pos, "action vocabulary not sorted or has duplicates");

  const std::size_t n_nodes = section("nodes");
  if (n_nodes < n_actions) throw ParseError(source, pos, "node count smaller than action count");
  const std::size_t n_states = n_nodes - n_actions;
  for (std::size_t i = 0; i < n_nodes; ++i, ++pos) {
    auto f = split(next(), '\t');
    if (f.size() != 3) throw fail("node line needs 3 fields");
    index_field(f[0], i);
    if (i < n_states) {
      if (f[1] != "S") throw fail("expected state node (S)");
      Vocabulary probe = g.objects;
      auto s = parse_canonical_key(f[2], probe);
      if (!s) throw fail("malformed state key '" + std::string(f[2]) + "'");
      if (probe.size() != g.objects.size()) throw fail("state key uses noun missing from objects section");
      if (!g.states.empty() && !canonical_less(g.states.back(), *s, g.objects)) {
        throw fail("state nodes not in canonical order");
      }
      g.states.push_back(*s);
    } else {
      if (f[1] != "A") throw fail("expected action node (A)");
      index_field(f[2], i - n_states);
    }
  }
  g.rebuild_index();

  const std::size_t n_edges = section("edges");
  std::pair<std::size_t, std::size_t> prev{0, 0};
  for (std::size_t i = 0; i < n_edges; ++i, ++pos) {
    auto f = split(next(), '\t');
    if (f.size() != 3) throw fail("edge line needs 3 fields");
    auto src = parse_int(f[0]);
    auto dst = parse_int(f[1]);
    auto w = parse_double(f[2]);
    if (!src || !dst || *src < 0 || *dst < 0 || static_cast<std::size_t>(*src) >= n_nodes ||
        static_cast<std::size_t>(*dst) >= n_nodes) {
      throw fail("edge endpoint out of range");
    }
    if (!w || !std::isfinite(*w) || *w < 0.0 || *w > 1.0) throw fail("edge weight must be a number in [0,1]");
    std::pair<std::size_t, std::size_t> key{static_cast<std::size_t>(*src), static_cast<std::size_t>(*dst)};
    if (i > 0 && !(prev < key)) throw fail("edges not sorted or duplicated");
    prev = key;
    g.edges.emplace(key, *w);
  }

  auto f = split(next(), '\t');
  if (f.size() != 2 || f[0] != "checksum") throw fail("expected checksum line");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < pos; ++i) offset += lines[i].size() + 1;
  if (to_hex64(fnv1a64(text.substr(0, offset))) != f[1]) throw fail("checksum mismatch");
  ++pos;
  if (pos != lines.size()) throw fail("trailing content after checksum");
  return g;
}

void save_graph(const ActivityGraph& graph, const std::filesystem::path& path) {
  write_file(path, serialize_graph(graph));
}

ActivityGraph load_graph(const std::filesystem::path& path) {
  return deserialize_graph(read_file(path), path.string());
}

}  // namespace egomg
