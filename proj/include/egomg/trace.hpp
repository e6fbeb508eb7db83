#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace egomg {

using ObjectId = std::uint32_t;
using MaybeObject = std::optional<ObjectId>;
using Frame = long long;

/// Object noun vocabulary. Ids are dense and assigned in first-seen order.
class Vocabulary {
 public:
  ObjectId intern(std::string_view noun);
  std::optional<ObjectId> find(std::string_view noun) const;
  const std::string& noun(ObjectId id) const { return nouns_.at(id); }
  std::size_t size() const { return nouns_.size(); }
  const std::vector<std::string>& nouns() const { return nouns_; }

  bool operator==(const Vocabulary& o) const { return nouns_ == o.nouns_; }

 private:
  std::vector<std::string> nouns_;
  std::unordered_map<std::string, ObjectId> index_;
};

/// One classified contact/anticipation tuple for both hands at one detection step.
struct DetectionRecord {
  Frame frame = 0;
  std::vector<ObjectId> contact_right_top5;
  std::vector<ObjectId> contact_left_top5;
  MaybeObject anticipated_right;
  MaybeObject anticipated_left;

  bool operator==(const DetectionRecord&) const = default;
};

struct VideoDetections {
  std::string video_id;
  std::vector<DetectionRecord> records;  // strictly increasing frames

  bool operator==(const VideoDetections&) const = default;
};

/// Detection records grouped by video, videos ordered by id.
struct DetectionStream {
  std::vector<VideoDetections> videos;

  std::size_t record_count() const;
  bool operator==(const DetectionStream&) const = default;
};

/// Contact right/left and anticipated right/left. The all-none tuple is the null state.
struct ManipulationState {
  MaybeObject contact_right;
  MaybeObject contact_left;
  MaybeObject anticipated_right;
  MaybeObject anticipated_left;

  bool is_null() const {
    return !contact_right && !contact_left && !anticipated_right && !anticipated_left;
  }
  auto operator<=>(const ManipulationState&) const = default;
};

struct ManipulationStateHash {
  std::size_t operator()(const ManipulationState& s) const noexcept;
};

/// `contact_r|contact_l|anticipated_r|anticipated_l`, `-` for none.
std::string canonical_key(const ManipulationState& s, const Vocabulary& vocab);
/// Inverse of canonical_key; unseen nouns are interned.
std::optional<ManipulationState> parse_canonical_key(std::string_view key, Vocabulary& vocab);
/// Orders states by their noun strings (none first), independent of id assignment.
bool canonical_less(const ManipulationState& a, const ManipulationState& b, const Vocabulary& vocab);

struct TimedState {
  Frame frame = 0;
  ManipulationState state;
};

struct ContactVideo {
  std::string video_id;
  std::vector<TimedState> steps;
};

/// Per-record states after the contact-consistency filter.
struct ContactStream {
  std::vector<ContactVideo> videos;
};

struct StateSpan {
  ManipulationState state;
  Frame start_frame = 0;
  Frame end_frame = 0;  // inclusive

  bool operator==(const StateSpan&) const = default;
};

struct StateSequence {
  std::string video_id;
  std::vector<StateSpan> items;

  bool operator==(const StateSequence&) const = default;
};

struct ActionAnnotation {
  std::string video_id;
  Frame start_frame = 0;
  Frame stop_frame = 0;
  std::string verb;
  std::string noun;
  int action_id = -1;

  bool operator==(const ActionAnnotation&) const = default;
};

/// (verb, noun) action vocabulary, ids in lexicographic order of the pair.
class ActionVocabulary {
 public:
  ActionVocabulary() = default;
  explicit ActionVocabulary(std::vector<std::pair<std::string, std::string>> actions);

  static ActionVocabulary from_annotations(std::span<const ActionAnnotation> annotations);

  std::optional<int> find(std::string_view verb, std::string_view noun) const;
  const std::string& verb(int id) const { return actions_.at(static_cast<std::size_t>(id)).first; }
  const std::string& noun(int id) const { return actions_.at(static_cast<std::size_t>(id)).second; }
  std::string label(int id) const { return verb(id) + " " + noun(id); }
  std::size_t size() const { return actions_.size(); }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return actions_; }

  bool operator==(const ActionVocabulary& o) const { return actions_ == o.actions_; }

 private:
  std::vector<std::pair<std::string, std::string>> actions_;
};

/// Lowercase, non-empty, no whitespace, ',' or '|', and not the none marker `-`.
bool valid_token(std::string_view token);

// Trace / annotation I/O ------------------------------------------------------

DetectionStream parse_trace_text(std::string_view text, const std::string& source, Vocabulary& vocab);
DetectionStream parse_trace_file(const std::filesystem::path& path, Vocabulary& vocab);
std::string format_trace(const DetectionStream& stream, const Vocabulary& vocab);

std::vector<ActionAnnotation> parse_annotation_text(std::string_view text, const std::string& source);
std::vector<ActionAnnotation> parse_annotation_file(const std::filesystem::path& path);
std::string format_annotations(std::span<const ActionAnnotation> annotations);

/// Fills action_id from the vocabulary; throws DataError for pairs the vocabulary lacks.
void assign_action_ids(std::vector<ActionAnnotation>& annotations, const ActionVocabulary& vocab);

// Processing ------------------------------------------------------------------

struct FilterOptions {
  double history_seconds = 7.0;
  double fps = 15.0;
};

/// Trailing anticipation window length in frames, ceil(history_seconds * fps).
Frame history_window_frames(const FilterOptions& options);

/// Resolves each hand's contact to the best-ranked top-5 class that the same hand anticipated
/// within the trailing window (current record included). Anticipated slots pass through.
ContactStream filter_contacts(const DetectionStream& stream, const FilterOptions& options);
ContactVideo filter_contacts(const VideoDetections& video, const FilterOptions& options);

/// Run-length deduplication of consecutive identical states.
StateSequence extract_states(const ContactVideo& video);
std::vector<StateSequence> extract_states(const ContactStream& stream);

/// Half-open frame interval [begin, end).
struct FrameWindow {
  Frame begin = 0;
  Frame end = 0;
  bool operator==(const FrameWindow&) const = default;
};

/// [max(0, start - (obs + ant) * fps), start - ant * fps), rounded to whole frames.
FrameWindow observation_window(Frame action_start_frame, double anticipation_seconds,
                               double observation_seconds, double fps);

/// Items intersecting the observation window, clipped to it. Throws std::invalid_argument when
/// the window ends at or before frame 0.
StateSequence window_states(const StateSequence& seq, Frame action_start_frame,
                            double anticipation_seconds, double observation_seconds = 60.0,
                            double fps = 15.0);
StateSequence window_states(const StateSequence& seq, const FrameWindow& window);

}  // namespace egomg
