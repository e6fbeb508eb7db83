#include "egomg/segments.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace egomg {

SegmentSet make_segments(std::span<const ActionAnnotation> annotations, double anticipation_seconds,
                         double observation_seconds, double fps) {
  std::vector<const ActionAnnotation*> sorted;
  sorted.reserve(annotations.size());
  for (const auto& a : annotations) {
    if (a.action_id < 0) throw std::invalid_argument("make_segments: annotation without action id");
    sorted.push_back(&a);
  }
  std::stable_sort(sorted.begin(), sorted.end(), [](const ActionAnnotation* a, const ActionAnnotation* b) {
    return std::tie(a->video_id, a->start_frame, a->stop_frame, a->verb, a->noun) <
           std::tie(b->video_id, b->start_frame, b->stop_frame, b->verb, b->noun);
  });

  SegmentSet out;
  std::map<std::string, std::size_t> ordinal;
  for (const auto* a : sorted) {
    const std::size_t k = ordinal[a->video_id]++;
    const auto window = observation_window(a->start_frame, anticipation_seconds, observation_seconds, fps);
    if (window.end <= 0) {
      ++out.dropped;
      continue;
    }
    out.segments.push_back({a->video_id + "/" + std::to_string(k), a->video_id, a->start_frame, anticipation_seconds,
                            observation_seconds, a->action_id});
  }
  return out;
}

bool in_top_k(std::span<const double> scores, std::size_t label, std::size_t k) {
  if (label >= scores.size()) throw std::out_of_range("label outside score row");
  const double s = scores[label];
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > s || (scores[j] == s && j < label)) ++ahead;
  }
  return ahead < k;
}

double topk_accuracy(const Matrix& scores, std::span<const std::size_t> labels, std::size_t k) {
  if (k < 1 || k > scores.cols) {
    throw std::invalid_argument("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(scores.cols) + "]");
  }
  if (labels.size() != scores.rows) throw std::invalid_argument("top-k: label count does not match score rows");
  if (scores.rows == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < scores.rows; ++r) {
    if (in_top_k(scores.row(r), labels[r], k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.rows);
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  ids.resize(k);
  return ids;
}

}  // namespace egomg
