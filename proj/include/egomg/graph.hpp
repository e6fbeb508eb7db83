#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "egomg/matrix.hpp"
#include "egomg/trace.hpp"

namespace egomg {

enum class ActionEdgeDirection { StateToAction, ActionToState };

using TransitionEdges = std::map<std::pair<ManipulationState, ManipulationState>, double>;
using ActionEdges = std::map<std::pair<ManipulationState, int>, double>;

/// The consolidated state/action graph.
///
/// Node indices: state nodes first in canonical order, then one node per action id.
/// `edges` holds every weighted directed edge, self loops included.
struct ActivityGraph {
  Vocabulary objects;
  ActionVocabulary actions;
  std::vector<ManipulationState> states;
  std::map<std::pair<std::size_t, std::size_t>, double> edges;

  std::size_t state_count() const { return states.size(); }
  std::size_t action_count() const { return actions.size(); }
  std::size_t node_count() const { return states.size() + actions.size(); }
  std::size_t action_node(int action_id) const { return states.size() + static_cast<std::size_t>(action_id); }
  bool is_state_node(std::size_t node) const { return node < states.size(); }

  /// Node index of a state, if the graph contains it.
  std::optional<std::size_t> find_state(const ManipulationState& s) const;
  void rebuild_index();

  bool operator==(const ActivityGraph& o) const {
    return objects == o.objects && actions == o.actions && states == o.states && edges == o.edges;
  }

 private:
  std::unordered_map<ManipulationState, std::size_t, ManipulationStateHash> index_;
};

/// p(next | current) pooled over all sequences.
TransitionEdges estimate_transitions(std::span<const StateSequence> sequences);

/// p(action | state) from actions whose [start, stop) overlaps the state's span.
ActionEdges estimate_action_edges(std::span<const StateSequence> sequences,
                                  std::span<const ActionAnnotation> annotations);

struct GraphOptions {
  ActionEdgeDirection action_edge_direction = ActionEdgeDirection::StateToAction;
};

/// `sequences` should cover every split; `annotations` only the training split.
/// Annotations must carry action ids from `actions`.
ActivityGraph build_graph(std::span<const StateSequence> sequences,
                          std::span<const ActionAnnotation> annotations, const Vocabulary& objects,
                          const ActionVocabulary& actions, const GraphOptions& options = {},
                          std::vector<std::string>* warnings = nullptr);

/// Row-stochastic normalization over out-edges (self loop included).
CsrMatrix normalize_adjacency(const ActivityGraph& graph);

std::string serialize_graph(const ActivityGraph& graph);
ActivityGraph deserialize_graph(std::string_view text, const std::string& source = "<graph>");
void save_graph(const ActivityGraph& graph, const std::filesystem::path& path);
ActivityGraph load_graph(const std::filesystem::path& path);

}  // namespace egomg
