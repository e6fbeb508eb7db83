#include "egomg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

#include "egomg/io_util.hpp"

namespace egomg {

namespace {

constexpr std::string_view kGrammarHeader = "EGO-OMG-GRAMMAR v1";

bool row_is_zero(const Matrix& m, std::size_t r) {
  const auto row = m.row(r);
  return std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
}

void check_distribution(std::span<const double> row, const std::string& what) {
  double total = 0.0;
  for (double v : row) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument(what + " has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument(what + " sums to " + format_double(total) + ", not 1");
}

std::size_t sample(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

bool bernoulli(double p, std::mt19937_64& rng) {
  return p > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

const MaybeObject& contact(const ManipulationState& s, int hand) { return hand == 0 ? s.contact_right : s.contact_left; }
const MaybeObject& anticipated(const ManipulationState& s, int hand) {
  return hand == 0 ? s.anticipated_right : s.anticipated_left;
}

std::vector<ObjectId> top5(const MaybeObject& truth, std::size_t n_objects, double rate, std::mt19937_64& rng) {
  std::vector<ObjectId> out;
  if (!truth) return out;
  out.push_back(*truth);
  for (int rank = 1; rank < 5 && out.size() < n_objects; ++rank) {
    if (!bernoulli(rate, rng)) continue;
    std::vector<ObjectId> pool;
    for (ObjectId o = 0; o < n_objects; ++o) {
      if (std::find(out.begin(), out.end(), o) == out.end()) pool.push_back(o);
    }
    out.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
  }
  return out;
}

std::string join_row(std::span<const double> row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ' ';
    out += format_double(row[i]);
  }
  return out;
}

ActivityGrammar benchmark_base() {
  ActivityGrammar g;
  g.objects = {"cup", "knife", "plate", "pan", "sponge", "fridge:door"};
  g.actions = {{"take", "cup"}, {"cut", "knife"}, {"put", "plate"}, {"stir", "pan"}, {"wash", "sponge"}};
  const MaybeObject none;
  auto o = [](ObjectId id) { return MaybeObject(id); };
  // Contacts are anticipated by the same state, and no two states share a noun set.
  g.states = {
      {o(0), none, o(0), none}, {o(1), none, o(1), none}, {none, o(2), none, o(2)}, {none, o(3), none, o(3)},
      {o(4), none, o(4), none}, {o(0), o(2), o(0), o(2)}, {o(1), o(3), o(1), o(3)}, {none, none, o(5), none},
      {o(4), o(3), o(4), o(3)}, {none, none, o(0), o(1)},
  };
  const std::size_t n = g.states.size();
  g.initial.assign(n, 1.0 / static_cast<double>(n));
  g.emissions = Matrix(n, g.actions.size());
  for (std::size_t i = 0; i < n; ++i) g.emissions(i, i % g.actions.size()) = 1.0;
  return g;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Vocabulary ActivityGrammar::vocabulary() const {
  Vocabulary v;
  for (const auto& o : objects) v.intern(o);
  return v;
}

void ActivityGrammar::validate() const {
  if (objects.empty()) throw std::invalid_argument("grammar has no objects");
  std::set<std::string> seen;
  for (const auto& o : objects) {
    if (!valid_token(o)) throw std::invalid_argument("invalid object noun '" + o + "'");
    if (!seen.insert(o).second) throw std::invalid_argument("duplicate object noun '" + o + "'");
  }
  if (actions.empty()) throw std::invalid_argument("grammar has no actions");
  if (std::set(actions.begin(), actions.end()).size() != actions.size()) throw std::invalid_argument("duplicate action");
  for (const auto& [verb, noun] : actions) {
    if (!valid_token(verb) || !valid_token(noun)) throw std::invalid_argument("invalid action '" + verb + " " + noun + "'");
  }
  const std::size_t n = states.size();
  if (n < 2) throw std::invalid_argument("grammar needs at least two states");
  if (std::set(states.begin(), states.end()).size() != n) throw std::invalid_argument("duplicate state");
  for (const auto& s : states) {
    for (const auto* slot : {&s.contact_right, &s.contact_left, &s.anticipated_right, &s.anticipated_left}) {
      if (*slot && **slot >= objects.size()) throw std::invalid_argument("state references an unknown object");
    }
  }
  if (transitions.rows != n || transitions.cols != n) throw std::invalid_argument("transition matrix must be states x states");
  for (std::size_t i = 0; i < n; ++i) {
    check_distribution(transitions.row(i), "transition row " + std::to_string(i));
    if (transitions(i, i) != 0.0) throw std::invalid_argument("transition row " + std::to_string(i) + " has a self transition");
  }
  if (initial.size() != n) throw std::invalid_argument("initial distribution must have one entry per state");
  check_distribution(initial, "initial distribution");
  if (emissions.rows != n || emissions.cols != actions.size()) {
    throw std::invalid_argument("emission matrix must be states x actions");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!row_is_zero(emissions, i)) check_distribution(emissions.row(i), "emission row " + std::to_string(i));
  }
  if (!(emission_rate >= 0.0 && emission_rate <= 1.0) || !(distractor_rate >= 0.0 && distractor_rate <= 1.0) ||
      !(dropout_rate >= 0.0 && dropout_rate <= 1.0)) {
    throw std::invalid_argument("rates must lie in [0, 1]");
  }
  if (min_dwell < 1) throw std::invalid_argument("min_dwell must be at least 1");
  if (!(mean_dwell >= static_cast<double>(min_dwell))) throw std::invalid_argument("mean_dwell must be >= min_dwell");
  if (max_dwell < min_dwell) throw std::invalid_argument("max_dwell must be >= min_dwell");
  if (lead_steps >= min_dwell) throw std::invalid_argument("lead_steps must be below min_dwell");
  if (stride < 1) throw std::invalid_argument("stride must be positive");

  // A contact the state does not anticipate itself must be anticipated by every predecessor,
  // and the whole span must stay inside the filter's history window.
  const Frame window = history_window_frames({history_seconds, fps});
  for (std::size_t j = 0; j < n; ++j) {
    for (int hand = 0; hand < 2; ++hand) {
      const auto& c = contact(states[j], hand);
      if (!c || anticipated(states[j], hand) == c) continue;
      const std::string where = "state " + std::to_string(j) + (hand == 0 ? " (right hand)" : " (left hand)");
      if (initial[j] > 0.0) throw std::invalid_argument(where + ": unanticipated contact cannot start a video");
      for (std::size_t i = 0; i < n; ++i) {
        if (transitions(i, j) > 0.0 && anticipated(states[i], hand) != c) {
          throw std::invalid_argument(where + ": predecessor " + std::to_string(i) + " does not anticipate the contact");
        }
      }
      if (static_cast<Frame>(max_dwell) * stride > window) {
        throw std::invalid_argument(where + ": max_dwell exceeds the anticipation history window");
      }
    }
  }
}

// Text format ----------------------------------------------------------------------------

std::string format_grammar(const ActivityGrammar& g) {
  const Vocabulary vocab = g.vocabulary();
  std::string out(kGrammarHeader);
  out += '\n';
  auto kv = [&](const char* key, const std::string& value) { out += std::string(key) + " = " + value + '\n'; };
  kv("emission_rate", format_double(g.emission_rate));
  kv("min_dwell", std::to_string(g.min_dwell));
  kv("mean_dwell", format_double(g.mean_dwell));
  kv("max_dwell", std::to_string(g.max_dwell));
  kv("lead_steps", std::to_string(g.lead_steps));
  kv("stride", std::to_string(g.stride));
  kv("fps", format_double(g.fps));
  kv("history_seconds", format_double(g.history_seconds));
  kv("distractor_rate", format_double(g.distractor_rate));
  kv("dropout_rate", format_double(g.dropout_rate));
  out += "objects " + std::to_string(g.objects.size()) + '\n';
  for (const auto& o : g.objects) out += o + '\n';
  out += "actions " + std::to_string(g.actions.size()) + '\n';
  for (const auto& [verb, noun] : g.actions) out += verb + ' ' + noun + '\n';
  out += "states " + std::to_string(g.states.size()) + '\n';
  for (const auto& s : g.states) out += canonical_key(s, vocab) + '\n';
  out += "transitions " + std::to_string(g.transitions.rows) + '\n';
  for (std::size_t r = 0; r < g.transitions.rows; ++r) out += join_row(g.transitions.row(r)) + '\n';
  out += "initial\n" + join_row(g.initial) + '\n';
  out += "emissions " + std::to_string(g.emissions.rows) + '\n';
  for (std::size_t r = 0; r < g.emissions.rows; ++r) out += join_row(g.emissions.row(r)) + '\n';
  return out;
}

ActivityGrammar parse_grammar_text(std::string_view text, const std::string& source) {
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    raw = trim(raw);
    if (raw.empty() || raw.front() == '#') continue;
    lines.emplace_back(line_no, raw);
  }
  if (lines.empty() || lines[0].second != kGrammarHeader) {
    throw ParseError(source, lines.empty() ? 0 : lines[0].first, "expected header '" + std::string(kGrammarHeader) + "'");
  }

  ActivityGrammar g;
  Vocabulary vocab;
  std::set<std::string> blocks;
  std::size_t pos = 1;
  auto numbers = [&](std::size_t at, std::string_view s) {
    std::vector<double> row;
    for (auto f : split(s, ' ')) {
      if (f.empty()) continue;
      auto v = parse_double(f);
      if (!v) throw ParseError(source, at, "bad number '" + std::string(f) + "'");
      row.push_back(*v);
    }
    return row;
  };
  auto count_of = [&](std::size_t at, std::string_view s) {
    auto v = parse_int(s);
    if (!v || *v < 0) throw ParseError(source, at, "bad block size '" + std::string(s) + "'");
    if (pos + static_cast<std::size_t>(*v) > lines.size()) throw ParseError(source, at, "block truncated");
    return static_cast<std::size_t>(*v);
  };
  auto read_matrix = [&](std::size_t rows) {
    Matrix m;
    for (std::size_t r = 0; r < rows; ++r, ++pos) {
      auto row = numbers(lines[pos].first, lines[pos].second);
      if (r == 0) m = Matrix(0, row.size());
      if (row.size() != m.cols) throw ParseError(source, lines[pos].first, "ragged matrix row");
      m.data.insert(m.data.end(), row.begin(), row.end());
      ++m.rows;
    }
    return m;
  };

  while (pos < lines.size()) {
    const auto [at, line] = lines[pos++];
    if (auto eq = line.find('='); eq != std::string_view::npos) {
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      auto num = parse_double(value);
      auto integer = parse_int(value);
      auto need_int = [&]() -> std::size_t {
        if (!integer || *integer < 0) throw ParseError(source, at, "'" + std::string(key) + "' needs a non-negative integer");
        return static_cast<std::size_t>(*integer);
      };
      if (!num) throw ParseError(source, at, "bad value for '" + std::string(key) + "'");
      if (key == "emission_rate") g.emission_rate = *num;
      else if (key == "min_dwell") g.min_dwell = need_int();
      else if (key == "mean_dwell") g.mean_dwell = *num;
      else if (key == "max_dwell") g.max_dwell = need_int();
      else if (key == "lead_steps") g.lead_steps = need_int();
      else if (key == "stride") g.stride = static_cast<Frame>(need_int());
      else if (key == "fps") g.fps = *num;
      else if (key == "history_seconds") g.history_seconds = *num;
      else if (key == "distractor_rate") g.distractor_rate = *num;
      else if (key == "dropout_rate") g.dropout_rate = *num;
      else throw ParseError(source, at, "unknown key '" + std::string(key) + "'");
      continue;
    }
    auto fields = split(line, ' ');
    const std::string name(fields[0]);
    if (!blocks.insert(name).second) throw ParseError(source, at, "duplicate block '" + name + "'");
    if (name == "initial" && fields.size() == 1) {
      if (pos >= lines.size()) throw ParseError(source, at, "block truncated");
      g.initial = numbers(lines[pos].first, lines[pos].second);
      ++pos;
      continue;
    }
    if (fields.size() != 2) throw ParseError(source, at, "expected '<block> <count>' or 'key = value'");
    const std::size_t count = count_of(at, fields[1]);
    if (name == "objects") {
      for (std::size_t i = 0; i < count; ++i, ++pos) {
        const std::string noun(lines[pos].second);
        if (!valid_token(noun) || vocab.find(noun)) throw ParseError(source, lines[pos].first, "invalid or duplicate object '" + noun + "'");
        vocab.intern(noun);
        g.objects.push_back(noun);
      }
    } else if (name == "actions") {
      for (std::size_t i = 0; i < count; ++i, ++pos) {
        auto f = split(lines[pos].second, ' ');
        if (f.size() != 2) throw ParseError(source, lines[pos].first, "expected '<verb> <noun>'");
        g.actions.emplace_back(std::string(f[0]), std::string(f[1]));
      }
    } else if (name == "states") {
      if (!blocks.contains("objects")) throw ParseError(source, at, "states block must follow the objects block");
      for (std::size_t i = 0; i < count; ++i, ++pos) {
        const std::size_t before = vocab.size();
        auto s = parse_canonical_key(lines[pos].second, vocab);
        if (!s || vocab.size() != before) throw ParseError(source, lines[pos].first, "bad state key or unknown object");
        g.states.push_back(*s);
      }
    } else if (name == "transitions") {
      g.transitions = read_matrix(count);
    } else if (name == "emissions") {
      g.emissions = read_matrix(count);
    } else {
      throw ParseError(source, at, "unknown block '" + name + "'");
    }
  }
  if (!blocks.contains("initial") && !g.states.empty()) g.initial.assign(g.states.size(), 1.0 / static_cast<double>(g.states.size()));
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(source, 0, e.what());
  }
  return g;
}

ActivityGrammar load_grammar(const std::filesystem::path& path) { return parse_grammar_text(read_file(path), path.string()); }

// Generation ---------------------------------------------------------------------------------

ActivityGraph grammar_graph(const ActivityGrammar& g) {
  ActivityGraph graph;
  graph.objects = g.vocabulary();
  graph.actions = ActionVocabulary(g.actions);
  std::vector<std::size_t> order(g.states.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return canonical_less(g.states[a], g.states[b], graph.objects); });
  std::vector<std::size_t> node(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    graph.states.push_back(g.states[order[k]]);
    node[order[k]] = k;
  }
  for (std::size_t v = 0; v < graph.node_count(); ++v) graph.edges[{v, v}] = 1.0;
  for (std::size_t i = 0; i < g.states.size(); ++i) {
    for (std::size_t j = 0; j < g.states.size(); ++j) {
      if (g.transitions(i, j) > 0.0) graph.edges[{node[i], node[j]}] = g.transitions(i, j);
    }
    for (std::size_t a = 0; a < g.actions.size(); ++a) {
      if (g.emissions(i, a) > 0.0) {
        const int id = *graph.actions.find(g.actions[a].first, g.actions[a].second);
        graph.edges[{node[i], graph.action_node(id)}] = g.emissions(i, a);
      }
    }
  }
  graph.rebuild_index();
  return graph;
}

SyntheticData generate_traces(const ActivityGrammar& g, std::size_t n_videos, std::size_t steps_per_video,
                              std::uint64_t seed, const std::string& video_prefix) {
  g.validate();
  SyntheticData out;
  out.objects = g.vocabulary();
  out.actions = ActionVocabulary(g.actions);
  out.truth = grammar_graph(g);
  const std::size_t n_objects = g.objects.size();
  const double extra_mean = g.mean_dwell - static_cast<double>(g.min_dwell);
  std::geometric_distribution<std::size_t> extra(1.0 / (1.0 + extra_mean));

  for (std::size_t v = 0; v < n_videos; ++v) {
    std::mt19937_64 rng(derive_seed(seed, v));
    char id[64];
    std::snprintf(id, sizeof id, "%s%04zu", video_prefix.c_str(), v);
    VideoDetections video{id, {}};
    StateSequence chain{id, {}};
    std::size_t state = sample(g.initial, rng);
    std::size_t left = steps_per_video;
    Frame frame = 0;
    while (left > 0) {
      const std::size_t dwell = std::min({g.min_dwell + extra(rng), g.max_dwell, left});
      const ManipulationState& s = g.states[state];
      const Frame start = frame;
      for (std::size_t k = 0; k < dwell; ++k, frame += g.stride) {
        DetectionRecord r;
        r.frame = frame;
        r.contact_right_top5 = top5(s.contact_right, n_objects, g.distractor_rate, rng);
        r.contact_left_top5 = top5(s.contact_left, n_objects, g.distractor_rate, rng);
        r.anticipated_right = bernoulli(g.dropout_rate, rng) ? MaybeObject() : s.anticipated_right;
        r.anticipated_left = bernoulli(g.dropout_rate, rng) ? MaybeObject() : s.anticipated_left;
        video.records.push_back(std::move(r));
      }
      const Frame end = frame - g.stride;
      chain.items.push_back({s, start, end});
      if (dwell > g.lead_steps && !row_is_zero(g.emissions, state) && bernoulli(g.emission_rate, rng)) {
        const std::size_t a = sample(g.emissions.row(state), rng);
        ActionAnnotation ann{id, start + static_cast<Frame>(g.lead_steps) * g.stride, end + 1, g.actions[a].first,
                             g.actions[a].second, -1};
        ann.action_id = *out.actions.find(ann.verb, ann.noun);
        out.annotations.push_back(std::move(ann));
      }
      left -= dwell;
      state = sample(g.transitions.row(state), rng);
    }
    out.traces.videos.push_back(std::move(video));
    out.chains.push_back(std::move(chain));
  }
  return out;
}

ActivityGrammar learnable_grammar() {
  ActivityGrammar g = benchmark_base();
  const std::size_t n = g.states.size();
  g.transitions = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t step : {1, 3, 7}) g.transitions(i, (i + step) % n) = 1.0 / 3.0;
  }
  return g;
}

ActivityGrammar recency_grammar() {
  ActivityGrammar g = benchmark_base();
  const std::size_t n = g.states.size();
  g.transitions = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) g.transitions(i, j) = 1.0 / static_cast<double>(n - 1);
    }
  }
  return g;
}

Splits sequential_splits(std::span<const VideoDetections> videos, std::size_t n_train, std::size_t n_val) {
  Splits s;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    s.videos[videos[i].video_id] = i < n_train ? Split::Train : i < n_train + n_val ? Split::Val : Split::Test;
  }
  return s;
}

EmbeddingTable random_embeddings(const ActivityGrammar& g, std::size_t dimension, std::uint64_t seed) {
  std::set<std::string> tokens;
  for (const auto& o : g.objects) {
    for (auto t : split(o, ':')) tokens.emplace(t);
  }
  for (const auto& [verb, noun] : g.actions) {
    tokens.insert(verb);
    for (auto t : split(noun, ':')) tokens.emplace(t);
  }
  EmbeddingTable table;
  table.dimension = dimension;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& t : tokens) {
    std::vector<double> v(dimension);
    for (auto& x : v) x = normal(rng);
    table.entries.emplace(t, std::move(v));
  }
  return table;
}

ScoreTable simulate_appearance_scores(std::span<const EvalSegment> segments, std::size_t num_actions,
                                      const AppearanceOptions& options) {
  if (num_actions == 0) throw std::invalid_argument("appearance scores need at least one action");
  ScoreTable table;
  table.scores = Matrix(0, num_actions);
  std::vector<double> logits(num_actions);
  for (const auto& seg : segments) {
    const std::string key = seg.segment_id + '@' + format_double(seg.anticipation_seconds);
    std::mt19937_64 rng(derive_seed(options.seed, fnv1a64(key)));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& l : logits) l = options.noise * normal(rng);
    const bool hit = bernoulli(options.accuracy, rng);
    const std::size_t peak =
        hit ? static_cast<std::size_t>(seg.label) : std::uniform_int_distribution<std::size_t>(0, num_actions - 1)(rng);
    logits[peak] += options.peak;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (auto& l : logits) total += (l = std::exp(l - mx));
    for (auto l : logits) table.scores.data.push_back(l / total);
    ++table.scores.rows;
    table.ids.push_back(seg.segment_id);
  }
  return table;
}

}  // namespace egomg
