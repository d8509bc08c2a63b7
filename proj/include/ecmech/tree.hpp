#pragma once

#include <algorithm>
#include <deque>
#include <sstream>
#include <utility>
#include <variant>
#include <vector>

#include "ecmech/error.hpp"

namespace ecm {

/// A spanning tree over users 0..N-1 with an optional helper map phi.
class TreeNetwork {
 public:
  int n_users() const { return n_; }
  /// Tree edges (i, j) with i < j, sorted.
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  /// Sorted neighbours of i in the tree.
  const std::vector<int>& neighbors(int i) const {
    return adj_[static_cast<std::size_t>(i)];
  }
  bool adjacent(int i, int j) const {
    const auto& a = neighbors(i);
    return std::binary_search(a.begin(), a.end(), j);
  }
  /// First hop on the tree path from i to k; i itself when k == i.
  int nearest_via(int i, int k) const {
    return next_hop_[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }

  bool has_helpers() const { return !phi_.empty(); }
  int helper(int i) const {
    if (phi_.empty()) throw InvalidHelper("no helper map assigned");
    return phi_[static_cast<std::size_t>(i)];
  }
  const std::vector<int>& helpers() const { return phi_; }
  /// Users j with phi(j) == i, ascending.
  std::vector<int> helped_by(int i) const {
    std::vector<int> out;
    for (int j = 0; j < static_cast<int>(phi_.size()); ++j) {
      if (phi_[static_cast<std::size_t>(j)] == i) out.push_back(j);
    }
    return out;
  }

  /// Installs phi after checking phi(i) is a neighbour of i for every i.
  void set_helpers(std::vector<int> phi) {
    if (static_cast<int>(phi.size()) != n_) {
      throw InvalidHelper("helper map must cover every user");
    }
    for (int i = 0; i < n_; ++i) {
      const int h = phi[static_cast<std::size_t>(i)];
      if (h < 0 || h >= n_ || !adjacent(i, h)) {
        std::ostringstream os;
        os << "helper " << h + 1 << " of user " << i + 1 << " is not a neighbour";
        throw InvalidHelper(os.str());
      }
    }
    phi_ = std::move(phi);
  }

 private:
  friend TreeNetwork spanning_tree(int, const std::vector<std::pair<int, int>>&);
  TreeNetwork() = default;

  int n_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> adj_;
  std::vector<std::vector<int>> next_hop_;
  std::vector<int> phi_;
};

/// Breadth-first spanning tree rooted at user 0, visiting neighbours in
/// ascending order. Self-loops and repeated edges are ignored.
inline TreeNetwork spanning_tree(int n_users,
                                 const std::vector<std::pair<int, int>>& edges) {
  if (n_users < 1) throw DimensionMismatch("network needs at least one user");
  const auto N = static_cast<std::size_t>(n_users);
  std::vector<std::vector<int>> graph(N);
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_users || b >= n_users) {
      throw ScenarioError("edge references an unknown user");
    }
    if (a == b) continue;
    graph[static_cast<std::size_t>(a)].push_back(b);
    graph[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& g : graph) {
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
  }

  TreeNetwork net;
  net.n_ = n_users;
  net.adj_.assign(N, {});
  std::vector<bool> seen(N, false);
  std::deque<int> queue{0};
  seen[0] = true;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : graph[static_cast<std::size_t>(u)]) {
      if (seen[static_cast<std::size_t>(v)]) continue;
      seen[static_cast<std::size_t>(v)] = true;
      net.edges_.emplace_back(std::min(u, v), std::max(u, v));
      net.adj_[static_cast<std::size_t>(u)].push_back(v);
      net.adj_[static_cast<std::size_t>(v)].push_back(u);
      queue.push_back(v);
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Disconnected("message-exchange graph is not connected");
  }
  std::sort(net.edges_.begin(), net.edges_.end());
  for (auto& a : net.adj_) std::sort(a.begin(), a.end());

  // next_hop[i][k]: BFS from i labels every k with the first edge taken.
  net.next_hop_.assign(N, std::vector<int>(N, -1));
  for (int i = 0; i < n_users; ++i) {
    auto& hop = net.next_hop_[static_cast<std::size_t>(i)];
    hop[static_cast<std::size_t>(i)] = i;
    std::deque<int> q;
    for (int j : net.adj_[static_cast<std::size_t>(i)]) {
      hop[static_cast<std::size_t>(j)] = j;
      q.push_back(j);
    }
    while (!q.empty()) {
      const int u = q.front();
      q.pop_front();
      for (int v : net.adj_[static_cast<std::size_t>(u)]) {
        if (hop[static_cast<std::size_t>(v)] >= 0) continue;
        hop[static_cast<std::size_t>(v)] = hop[static_cast<std::size_t>(u)];
        q.push_back(v);
      }
    }
  }
  return net;
}

inline int nearest_via(const TreeNetwork& net, int i, int k) {
  return net.nearest_via(i, k);
}

struct LowestIndexHelper {};
struct ExplicitHelpers {
  std::vector<int> phi;
};
using HelperPolicy = std::variant<LowestIndexHelper, ExplicitHelpers>;

/// Helper map under a policy; Explicit maps are validated against the tree.
inline std::vector<int> assign_helpers(const TreeNetwork& net,
                                       const HelperPolicy& policy) {
  std::vector<int> phi;
  if (const auto* e = std::get_if<ExplicitHelpers>(&policy)) {
    phi = e->phi;
  } else {
    for (int i = 0; i < net.n_users(); ++i) {
      if (net.neighbors(i).empty()) {
        throw InvalidHelper("a single user has no neighbour to act as helper");
      }
      phi.push_back(net.neighbors(i).front());
    }
  }
  TreeNetwork check = net;
  check.set_helpers(phi);
  return phi;
}

}  // namespace ecm
