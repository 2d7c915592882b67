#include "maskforge/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>

namespace maskforge {
namespace {

// Boykov-Kolmogorov augmenting paths with search-tree reuse. Two trees grow
// from the terminals; a path is found when they touch, and the trees are
// repaired (orphan adoption) after each augmentation instead of being rebuilt.
class BkSolver {
 public:
  explicit BkSolver(const FlowNetwork& net) {
    const int n = net.node_count;
    nodes_.resize(n);
    arcs_.reserve(net.edges.size() * 2);
    for (const FlowEdge& e : net.edges) {
      const int a = static_cast<int>(arcs_.size());
      arcs_.push_back({e.v, nodes_[e.u].first, a + 1, e.cap_uv});
      nodes_[e.u].first = a;
      arcs_.push_back({e.u, nodes_[e.v].first, a, e.cap_vu});
      nodes_[e.v].first = a + 1;
    }
    for (int i = 0; i < n; ++i) {
      const TerminalCaps& t = net.terminal[i];
      // Flow through s->i->t is pushed immediately; only the excess remains.
      flow_ += std::min(t.from_source, t.to_sink);
      nodes_[i].terminal_residual = t.from_source - t.to_sink;
    }
  }

  double solve() {
    initialize_trees();
    int current = -1;
    while (true) {
      int i = -1;
      if (current >= 0) {
        i = current;
        current = -1;
        nodes_[i].active = false;
        if (nodes_[i].parent == kFree) i = -1;
      }
      if (i < 0) i = next_active();
      if (i < 0) break;

      const int bridge = grow(i);
      ++time_;
      if (bridge >= 0) {
        // Keep i current: it may still reach the other tree.
        nodes_[i].active = true;
        current = i;
        augment(bridge);
        adopt_orphans();
      }
    }
    return flow_;
  }

  bool in_source_tree(int i) const {
    return nodes_[i].parent != kFree && !nodes_[i].in_sink;
  }

 private:
  static constexpr int kFree = -1;
  static constexpr int kTerminal = -2;
  static constexpr int kOrphan = -3;
  static constexpr int kInfiniteDistance = std::numeric_limits<int>::max();

  struct Node {
    int first = -1;       // head of the outgoing arc list
    int parent = kFree;   // arc to the parent, or kFree/kTerminal/kOrphan
    long stamp = 0;       // time at which `distance` was last validated
    int distance = 0;     // distance to the terminal along the tree
    bool in_sink = false;
    bool active = false;
    double terminal_residual = 0.0;  // > 0: from source, < 0: to sink
  };

  struct Arc {
    int head;
    int next;
    int sister;
    double residual;
  };

  int head_of_parent(int i) const { return arcs_[nodes_[i].parent].head; }

  void set_active(int i) {
    if (!nodes_[i].active) {
      nodes_[i].active = true;
      active_.push_back(i);
    }
  }

  int next_active() {
    while (!active_.empty()) {
      const int i = active_.front();
      active_.pop_front();
      nodes_[i].active = false;
      if (nodes_[i].parent != kFree) return i;
    }
    return -1;
  }

  void initialize_trees() {
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
      Node& n = nodes_[i];
      if (n.terminal_residual > 0.0) {
        n.in_sink = false;
      } else if (n.terminal_residual < 0.0) {
        n.in_sink = true;
      } else {
        continue;
      }
      n.parent = kTerminal;
      n.stamp = 0;
      n.distance = 1;
      set_active(i);
    }
  }

  // Expands the tree containing i by one layer; returns the arc oriented from
  // the source tree to the sink tree when the two trees meet, else -1.
  int grow(int i) {
    Node& node = nodes_[i];
    for (int a = node.first; a >= 0; a = arcs_[a].next) {
      const Arc& arc = arcs_[a];
      const double residual = node.in_sink ? arcs_[arc.sister].residual : arc.residual;
      if (residual <= 0.0) continue;
      const int j = arc.head;
      Node& other = nodes_[j];
      if (other.parent == kFree) {
        other.in_sink = node.in_sink;
        other.parent = arc.sister;
        other.stamp = node.stamp;
        other.distance = node.distance + 1;
        set_active(j);
      } else if (other.in_sink != node.in_sink) {
        return node.in_sink ? arc.sister : a;
      } else if (other.stamp <= node.stamp && other.distance > node.distance) {
        // Shorter path to the terminal through i.
        other.parent = arc.sister;
        other.stamp = node.stamp;
        other.distance = node.distance + 1;
      }
    }
    return -1;
  }

  void make_orphan(int i) {
    nodes_[i].parent = kOrphan;
    orphans_.push_back(i);
  }

  void augment(int bridge) {
    double bottleneck = arcs_[bridge].residual;
    // Source side: walk from the bridge tail up to the source.
    int i = arcs_[arcs_[bridge].sister].head;
    while (nodes_[i].parent != kTerminal) {
      const int pa = nodes_[i].parent;
      bottleneck = std::min(bottleneck, arcs_[arcs_[pa].sister].residual);
      i = arcs_[pa].head;
    }
    bottleneck = std::min(bottleneck, nodes_[i].terminal_residual);
    // Sink side.
    i = arcs_[bridge].head;
    while (nodes_[i].parent != kTerminal) {
      const int pa = nodes_[i].parent;
      bottleneck = std::min(bottleneck, arcs_[pa].residual);
      i = arcs_[pa].head;
    }
    bottleneck = std::min(bottleneck, -nodes_[i].terminal_residual);

    arcs_[arcs_[bridge].sister].residual += bottleneck;
    arcs_[bridge].residual -= bottleneck;

    i = arcs_[arcs_[bridge].sister].head;
    while (true) {
      const int pa = nodes_[i].parent;
      if (pa == kTerminal) {
        nodes_[i].terminal_residual -= bottleneck;
        if (nodes_[i].terminal_residual == 0.0) make_orphan(i);
        break;
      }
      arcs_[pa].residual += bottleneck;
      arcs_[arcs_[pa].sister].residual -= bottleneck;
      if (arcs_[arcs_[pa].sister].residual == 0.0) make_orphan(i);
      i = arcs_[pa].head;
    }
    i = arcs_[bridge].head;
    while (true) {
      const int pa = nodes_[i].parent;
      if (pa == kTerminal) {
        nodes_[i].terminal_residual += bottleneck;
        if (nodes_[i].terminal_residual == 0.0) make_orphan(i);
        break;
      }
      arcs_[arcs_[pa].sister].residual += bottleneck;
      arcs_[pa].residual -= bottleneck;
      if (arcs_[pa].residual == 0.0) make_orphan(i);
      i = arcs_[pa].head;
    }
    flow_ += bottleneck;
  }

  // Distance from j to its terminal if j's path is intact, caching results
  // with the current time stamp; kInfiniteDistance if the path hits an orphan.
  int origin_distance(int j) {
    int d = 0;
    int k = j;
    while (true) {
      if (nodes_[k].stamp == time_) {
        d += nodes_[k].distance;
        break;
      }
      const int pa = nodes_[k].parent;
      ++d;
      if (pa == kTerminal) {
        nodes_[k].stamp = time_;
        nodes_[k].distance = 1;
        break;
      }
      if (pa == kOrphan) return kInfiniteDistance;
      k = arcs_[pa].head;
    }
    for (k = j; nodes_[k].stamp != time_; k = head_of_parent(k)) {
      nodes_[k].stamp = time_;
      nodes_[k].distance = d;
      --d;
    }
    return nodes_[j].distance;
  }

  void adopt(int i) {
    Node& node = nodes_[i];
    const bool sink = node.in_sink;
    int best = -1;
    int best_distance = kInfiniteDistance;
    for (int a = node.first; a >= 0; a = arcs_[a].next) {
      const Arc& arc = arcs_[a];
      const double residual = sink ? arc.residual : arcs_[arc.sister].residual;
      if (residual <= 0.0) continue;
      const int j = arc.head;
      if (nodes_[j].in_sink != sink || nodes_[j].parent == kFree) continue;
      const int d = origin_distance(j);
      if (d < best_distance) {
        best = a;
        best_distance = d;
      }
    }

    if (best >= 0) {
      node.parent = best;
      node.stamp = time_;
      node.distance = best_distance + 1;
      return;
    }

    node.parent = kFree;
    for (int a = node.first; a >= 0; a = arcs_[a].next) {
      const Arc& arc = arcs_[a];
      const int j = arc.head;
      Node& other = nodes_[j];
      if (other.in_sink != sink || other.parent == kFree) continue;
      const double residual = sink ? arc.residual : arcs_[arc.sister].residual;
      if (residual > 0.0) set_active(j);
      if (other.parent != kTerminal && other.parent != kOrphan &&
          arcs_[other.parent].head == i) {
        make_orphan(j);
      }
    }
  }

  void adopt_orphans() {
    while (!orphans_.empty()) {
      const int i = orphans_.front();
      orphans_.pop_front();
      adopt(i);
    }
  }

  std::vector<Node> nodes_;
  std::vector<Arc> arcs_;
  std::deque<int> active_;
  std::deque<int> orphans_;
  long time_ = 0;
  double flow_ = 0.0;
};

}  // namespace

void FlowNetwork::validate() const {
  if (node_count < 0) throw std::invalid_argument("negative node count");
  if (terminal.size() != static_cast<std::size_t>(node_count)) {
    throw std::invalid_argument("terminal table has " + std::to_string(terminal.size()) +
                                " entries for " + std::to_string(node_count) + " nodes");
  }
  auto check_cap = [](double c, const std::string& what) {
    if (!std::isfinite(c) || c < 0.0) {
      throw std::invalid_argument(what + " capacity must be finite and non-negative");
    }
  };
  for (int i = 0; i < node_count; ++i) {
    check_cap(terminal[i].from_source, "source");
    check_cap(terminal[i].to_sink, "sink");
  }
  for (const FlowEdge& e : edges) {
    if (e.u < 0 || e.v < 0 || e.u >= node_count || e.v >= node_count) {
      throw std::invalid_argument("edge endpoint out of range: " + std::to_string(e.u) +
                                  "-" + std::to_string(e.v));
    }
    if (e.u == e.v) {
      throw std::invalid_argument("self-loop at node " + std::to_string(e.u));
    }
    check_cap(e.cap_uv, "edge");
    check_cap(e.cap_vu, "edge");
  }
}

CutResult max_flow(const FlowNetwork& net) {
  net.validate();
  BkSolver solver(net);
  CutResult result;
  result.max_flow_value = solver.solve();
  result.side.resize(net.node_count);
  for (int i = 0; i < net.node_count; ++i) {
    result.side[i] = solver.in_source_tree(i) ? CutSide::kSource : CutSide::kSink;
  }
  return result;
}

double verify_cut(const FlowNetwork& net, const std::vector<CutSide>& side) {
  if (side.size() != static_cast<std::size_t>(net.node_count)) {
    throw std::invalid_argument("cut side vector does not match node count");
  }
  double total = 0.0;
  for (int i = 0; i < net.node_count; ++i) {
    total += side[i] == CutSide::kSource ? net.terminal[i].to_sink
                                         : net.terminal[i].from_source;
  }
  for (const FlowEdge& e : net.edges) {
    if (side[e.u] == CutSide::kSource && side[e.v] == CutSide::kSink) total += e.cap_uv;
    if (side[e.v] == CutSide::kSource && side[e.u] == CutSide::kSink) total += e.cap_vu;
  }
  return total;
}

}  // namespace maskforge
