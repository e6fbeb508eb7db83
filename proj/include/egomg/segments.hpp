#pragma once

#include <span>
#include <string>
#include <vector>

#include "egomg/matrix.hpp"
#include "egomg/trace.hpp"

namespace egomg {

/// One anticipation instance: observe [start - (obs + ant), start - ant) and predict the action.
struct EvalSegment {
  std::string segment_id;  // "<video_id>/<ordinal>", stable across anticipation times
  std::string video_id;
  Frame action_start_frame = 0;
  double anticipation_seconds = 1.0;
  double observation_seconds = 60.0;
  int label = -1;
};

struct SegmentSet {
  std::vector<EvalSegment> segments;
  std::size_t dropped = 0;  // windows ending at or before frame 0
};

/// One segment per annotation (action ids must be assigned), ordered by video then start frame.
SegmentSet make_segments(std::span<const ActionAnnotation> annotations, double anticipation_seconds,
                         double observation_seconds = 60.0, double fps = 15.0);

/// Fraction of rows whose label ranks within the k highest scores; ties go to the lower id.
double topk_accuracy(const Matrix& scores, std::span<const std::size_t> labels, std::size_t k);
bool in_top_k(std::span<const double> scores, std::size_t label, std::size_t k);
/// The k best ids of one score row, best first, ties by lower id.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);

}  // namespace egomg
