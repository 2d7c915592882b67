#pragma once

#include <cstdint>
#include <vector>

namespace maskforge {

struct TerminalCaps {
  double from_source = 0.0;
  double to_sink = 0.0;
};

struct FlowEdge {
  int u = 0;
  int v = 0;
  double cap_uv = 0.0;
  double cap_vu = 0.0;
};

/// s/t graph over `node_count` non-terminal nodes. For pixel grids node ids
/// follow the row-major pixel index.
struct FlowNetwork {
  int node_count = 0;
  std::vector<TerminalCaps> terminal;  // one entry per node
  std::vector<FlowEdge> edges;

  explicit FlowNetwork(int nodes = 0)
      : node_count(nodes), terminal(static_cast<std::size_t>(nodes)) {}

  void add_edge(int u, int v, double cap_uv, double cap_vu) {
    edges.push_back({u, v, cap_uv, cap_vu});
  }

  /// Throws std::invalid_argument on negative/non-finite capacity, bad index,
  /// self-loop, or terminal table size mismatch.
  void validate() const;
};

enum class CutSide : std::uint8_t { kSink = 0, kSource = 1 };

struct CutResult {
  double max_flow_value = 0.0;
  std::vector<CutSide> side;

  bool source_side(int node) const { return side[node] == CutSide::kSource; }
};

/// Exact maximum s->t flow and the minimum cut whose source side is exactly
/// the set of nodes reachable from the source in the final residual graph.
CutResult max_flow(const FlowNetwork& net);

/// Capacity of the s/t cut induced by `side`: source caps of sink-side nodes,
/// sink caps of source-side nodes, and edge capacities directed source->sink.
double verify_cut(const FlowNetwork& net, const std::vector<CutSide>& side);

inline double verify_cut(const FlowNetwork& net, const CutResult& result) {
  return verify_cut(net, result.side);
}

}  // namespace maskforge
