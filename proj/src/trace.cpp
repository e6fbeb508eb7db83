#include "egomg/trace.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>
#include <tuple>

#include "egomg/io_util.hpp"

namespace egomg {

namespace {

constexpr std::size_t kTop5 = 5;

void append_top5(std::string& out, const std::vector<ObjectId>& ids, const Vocabulary& vocab) {
  if (ids.empty()) {
    out += '-';
    return;
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += vocab.noun(ids[i]);
  }
}

void append_slot(std::string& out, const MaybeObject& id, const Vocabulary& vocab) {
  out += id ? vocab.noun(*id) : std::string("-");
}

void hash_mix(std::size_t& h, const MaybeObject& v) {
  const std::size_t x = v ? static_cast<std::size_t>(*v) + 1 : 0;
  h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
}

std::optional<std::string> slot_noun(const MaybeObject& id, const Vocabulary& vocab) {
  if (!id) return std::nullopt;
  return vocab.noun(*id);
}

// Tracks how many records in the trailing window anticipated each object.
class AnticipationWindow {
 public:
  explicit AnticipationWindow(Frame width) : width_(width) {}

  void push(Frame frame, const MaybeObject& anticipated) {
    while (!entries_.empty() && frame - entries_.front().first > width_) {
      const auto& old = entries_.front().second;
      if (old) {
        auto it = counts_.find(*old);
        if (--it->second == 0) counts_.erase(it);
      }
      entries_.pop_front();
    }
    entries_.emplace_back(frame, anticipated);
    if (anticipated) ++counts_[*anticipated];
  }

  MaybeObject resolve(const std::vector<ObjectId>& top5) const {
    for (ObjectId id : top5) {
      if (counts_.contains(id)) return id;
    }
    return std::nullopt;
  }

 private:
  Frame width_;
  std::deque<std::pair<Frame, MaybeObject>> entries_;
  std::map<ObjectId, int> counts_;
};

}  // namespace

bool valid_token(std::string_view tok) {
  if (tok.empty() || tok == "-") return false;
  for (char c : tok) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u) || c == ',' || c == '|' || std::isupper(u)) return false;
  }
  return true;
}

// Vocabulary ------------------------------------------------------------------

ObjectId Vocabulary::intern(std::string_view noun) {
  auto it = index_.find(std::string(noun));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<ObjectId>(nouns_.size());
  nouns_.emplace_back(noun);
  index_.emplace(nouns_.back(), id);
  return id;
}

std::optional<ObjectId> Vocabulary::find(std::string_view noun) const {
  auto it = index_.find(std::string(noun));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t DetectionStream::record_count() const {
  std::size_t n = 0;
  for (const auto& v : videos) n += v.records.size();
  return n;
}

std::size_t ManipulationStateHash::operator()(const ManipulationState& s) const noexcept {
  std::size_t h = 0;
  hash_mix(h, s.contact_right);
  hash_mix(h, s.contact_left);
  hash_mix(h, s.anticipated_right);
  hash_mix(h, s.anticipated_left);
  return h;
}

std::string canonical_key(const ManipulationState& s, const Vocabulary& vocab) {
  std::string key;
  append_slot(key, s.contact_right, vocab);
  key += '|';
  append_slot(key, s.contact_left, vocab);
  key += '|';
  append_slot(key, s.anticipated_right, vocab);
  key += '|';
  append_slot(key, s.anticipated_left, vocab);
  return key;
}

std::optional<ManipulationState> parse_canonical_key(std::string_view key, Vocabulary& vocab) {
  auto parts = split(key, '|');
  if (parts.size() != 4) return std::nullopt;
  MaybeObject slots[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (parts[i] == "-") continue;
    if (!valid_token(parts[i])) return std::nullopt;
    slots[i] = vocab.intern(parts[i]);
  }
  return ManipulationState{slots[0], slots[1], slots[2], slots[3]};
}

bool canonical_less(const ManipulationState& a, const ManipulationState& b, const Vocabulary& vocab) {
  auto tie = [&](const ManipulationState& s) {
    return std::make_tuple(slot_noun(s.contact_right, vocab), slot_noun(s.contact_left, vocab),
                           slot_noun(s.anticipated_right, vocab), slot_noun(s.anticipated_left, vocab));
  };
  return tie(a) < tie(b);
}

// ActionVocabulary ------------------------------------------------------------

ActionVocabulary::ActionVocabulary(std::vector<std::pair<std::string, std::string>> actions)
    : actions_(std::move(actions)) {
  std::sort(actions_.begin(), actions_.end());
  actions_.erase(std::unique(actions_.begin(), actions_.end()), actions_.end());
}

ActionVocabulary ActionVocabulary::from_annotations(std::span<const ActionAnnotation> annotations) {
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(annotations.size());
  for (const auto& a : annotations) pairs.emplace_back(a.verb, a.noun);
  return ActionVocabulary(std::move(pairs));
}

std::optional<int> ActionVocabulary::find(std::string_view verb, std::string_view noun) const {
  const std::pair<std::string, std::string> key{verb, noun};
  auto it = std::lower_bound(actions_.begin(), actions_.end(), key);
  if (it == actions_.end() || *it != key) return std::nullopt;
  return static_cast<int>(it - actions_.begin());
}

// Trace I/O -------------------------------------------------------------------

DetectionStream parse_trace_text(std::string_view text, const std::string& source, Vocabulary& vocab) {
  std::map<std::string, VideoDetections> groups;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (trim(raw).empty() || raw.front() == '#') continue;

    auto fields = split(raw, '\t');
    if (fields.size() != 6) {
      throw ParseError(source, line_no,
                       "expected 6 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw ParseError(source, line_no, "empty video_id");
    auto frame = parse_int(fields[1]);
    if (!frame) throw ParseError(source, line_no, "frame is not an integer: '" + std::string(fields[1]) + "'");
    if (*frame < 0) throw ParseError(source, line_no, "negative frame");

    DetectionRecord rec;
    rec.frame = *frame;
    auto parse_top5 = [&](std::string_view field, const char* name) {
      std::vector<ObjectId> ids;
      if (field == "-") return ids;
      auto toks = split(field, ',');
      if (toks.size() > kTop5) {
        throw ParseError(source, line_no,
                         std::string(name) + " has " + std::to_string(toks.size()) + " entries (max 5)");
      }
      for (auto tok : toks) {
        if (!valid_token(tok)) {
          throw ParseError(source, line_no, std::string(name) + ": invalid noun '" + std::string(tok) + "'");
        }
        const ObjectId id = vocab.intern(tok);
        if (std::find(ids.begin(), ids.end(), id) != ids.end()) {
          throw ParseError(source, line_no, std::string(name) + ": duplicate noun '" + std::string(tok) + "'");
        }
        ids.push_back(id);
      }
      return ids;
    };
    auto parse_slot = [&](std::string_view field, const char* name) -> MaybeObject {
      if (field == "-") return std::nullopt;
      if (!valid_token(field)) {
        throw ParseError(source, line_no, std::string(name) + ": invalid noun '" + std::string(field) + "'");
      }
      return vocab.intern(field);
    };
    rec.contact_right_top5 = parse_top5(fields[2], "contact_right_top5");
    rec.contact_left_top5 = parse_top5(fields[3], "contact_left_top5");
    rec.anticipated_right = parse_slot(fields[4], "anticipated_right");
    rec.anticipated_left = parse_slot(fields[5], "anticipated_left");

    auto& group = groups[std::string(fields[0])];
    if (group.video_id.empty()) group.video_id = std::string(fields[0]);
    if (!group.records.empty() && group.records.back().frame >= rec.frame) {
      throw ParseError(source, line_no,
                       "non-monotone frame " + std::to_string(rec.frame) + " in video " + group.video_id +
                           " (previous " + std::to_string(group.records.back().frame) + ")");
    }
    group.records.push_back(std::move(rec));
  }

  DetectionStream stream;
  stream.videos.reserve(groups.size());
  for (auto& [id, group] : groups) stream.videos.push_back(std::move(group));
  return stream;
}

DetectionStream parse_trace_file(const std::filesystem::path& path, Vocabulary& vocab) {
  return parse_trace_text(read_file(path), path.string(), vocab);
}

std::string format_trace(const DetectionStream& stream, const Vocabulary& vocab) {
  std::string out;
  for (const auto& video : stream.videos) {
    for (const auto& r : video.records) {
      out += video.video_id;
      out += '\t';
      out += std::to_string(r.frame);
      out += '\t';
      append_top5(out, r.contact_right_top5, vocab);
      out += '\t';
      append_top5(out, r.contact_left_top5, vocab);
      out += '\t';
      append_slot(out, r.anticipated_right, vocab);
      out += '\t';
      append_slot(out, r.anticipated_left, vocab);
      out += '\n';
    }
  }
  return out;
}

std::vector<ActionAnnotation> parse_annotation_text(std::string_view text, const std::string& source) {
  std::vector<ActionAnnotation> out;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (trim(raw).empty() || raw.front() == '#') continue;
    auto fields = split(raw, '\t');
    if (fields.size() != 5) {
      throw ParseError(source, line_no,
                       "expected 5 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw ParseError(source, line_no, "empty video_id");
    auto start = parse_int(fields[1]);
    auto stop = parse_int(fields[2]);
    if (!start || !stop) throw ParseError(source, line_no, "start/stop frame is not an integer");
    if (*start < 0 || *stop < 0) throw ParseError(source, line_no, "negative frame");
    if (*start >= *stop) throw ParseError(source, line_no, "start_frame must be < stop_frame");
    if (!valid_token(fields[3])) throw ParseError(source, line_no, "invalid verb '" + std::string(fields[3]) + "'");
    if (!valid_token(fields[4])) throw ParseError(source, line_no, "invalid noun '" + std::string(fields[4]) + "'");
    out.push_back({std::string(fields[0]), *start, *stop, std::string(fields[3]), std::string(fields[4]), -1});
  }
  return out;
}

std::vector<ActionAnnotation> parse_annotation_file(const std::filesystem::path& path) {
  return parse_annotation_text(read_file(path), path.string());
}

std::string format_annotations(std::span<const ActionAnnotation> annotations) {
  std::string out;
  for (const auto& a : annotations) {
    out += a.video_id + '\t' + std::to_string(a.start_frame) + '\t' + std::to_string(a.stop_frame) +
           '\t' + a.verb + '\t' + a.noun + '\n';
  }
  return out;
}

void assign_action_ids(std::vector<ActionAnnotation>& annotations, const ActionVocabulary& vocab) {
  for (auto& a : annotations) {
    auto id = vocab.find(a.verb, a.noun);
    if (!id) throw DataError("action '" + a.verb + " " + a.noun + "' missing from action vocabulary");
    a.action_id = *id;
  }
}

// Processing ------------------------------------------------------------------

Frame history_window_frames(const FilterOptions& options) {
  if (!(options.fps > 0.0) || !(options.history_seconds > 0.0)) {
    throw std::invalid_argument("filter_contacts: fps and history_seconds must be positive");
  }
  // Tolerate representation error in products like 7 * 15.
  return static_cast<Frame>(std::ceil(options.history_seconds * options.fps - 1e-9));
}

ContactVideo filter_contacts(const VideoDetections& video, const FilterOptions& options) {
  const Frame width = history_window_frames(options);
  AnticipationWindow right(width), left(width);
  ContactVideo out;
  out.video_id = video.video_id;
  out.steps.reserve(video.records.size());
  for (const auto& r : video.records) {
    right.push(r.frame, r.anticipated_right);
    left.push(r.frame, r.anticipated_left);
    ManipulationState s;
    s.contact_right = right.resolve(r.contact_right_top5);
    s.contact_left = left.resolve(r.contact_left_top5);
    s.anticipated_right = r.anticipated_right;
    s.anticipated_left = r.anticipated_left;
    out.steps.push_back({r.frame, s});
  }
  return out;
}

ContactStream filter_contacts(const DetectionStream& stream, const FilterOptions& options) {
  history_window_frames(options);
  ContactStream out;
  out.videos.reserve(stream.videos.size());
  for (const auto& v : stream.videos) out.videos.push_back(filter_contacts(v, options));
  return out;
}

StateSequence extract_states(const ContactVideo& video) {
  StateSequence seq;
  seq.video_id = video.video_id;
  for (const auto& step : video.steps) {
    if (!seq.items.empty() && seq.items.back().state == step.state) {
      seq.items.back().end_frame = step.frame;
    } else {
      seq.items.push_back({step.state, step.frame, step.frame});
    }
  }
  return seq;
}

std::vector<StateSequence> extract_states(const ContactStream& stream) {
  std::vector<StateSequence> out;
  out.reserve(stream.videos.size());
  for (const auto& v : stream.videos) out.push_back(extract_states(v));
  return out;
}

FrameWindow observation_window(Frame action_start_frame, double anticipation_seconds,
                               double observation_seconds, double fps) {
  if (action_start_frame < 0) throw std::invalid_argument("action_start_frame must be >= 0");
  if (!(fps > 0.0) || !(observation_seconds > 0.0) || anticipation_seconds < 0.0) {
    throw std::invalid_argument("observation window: need fps > 0, observation > 0, anticipation >= 0");
  }
  const Frame end = action_start_frame - std::llround(anticipation_seconds * fps);
  const Frame begin =
      std::max<Frame>(0, action_start_frame - std::llround((observation_seconds + anticipation_seconds) * fps));
  return {begin, end};
}

StateSequence window_states(const StateSequence& seq, const FrameWindow& window) {
  if (window.end <= 0) {
    throw std::invalid_argument("observation window ends at frame " + std::to_string(window.end) +
                                ", before the video starts");
  }
  StateSequence out;
  out.video_id = seq.video_id;
  for (const auto& item : seq.items) {
    if (item.end_frame < window.begin) continue;
    if (item.start_frame >= window.end) break;
    out.items.push_back({item.state, std::max(item.start_frame, window.begin),
                         std::min(item.end_frame, window.end - 1)});
  }
  return out;
}

StateSequence window_states(const StateSequence& seq, Frame action_start_frame, double anticipation_seconds,
                            double observation_seconds, double fps) {
  return window_states(seq, observation_window(action_start_frame, anticipation_seconds, observation_seconds, fps));
}

}  // namespace egomg
