#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gbn/corpus.hpp"
#include "gbn/distributions.hpp"
#include "gbn/errors.hpp"
#include "gbn/model.hpp"

namespace gbn {

// Layer-t factors pushed down to the data layer (columns of the product
// Phi^(1)...Phi^(t)) with their popularity weights r^(t).
struct ProjectedFactors {
  int layer = 1;
  Matrix matrix;   // V x K_t, columns are probability vectors
  Vector weights;  // K_t, (prod_{l=t+1}^T Phi^(l)) r
};

inline ProjectedFactors project(const GbnNetwork& net, int t) {
  if (t < 1 || t > net.depth()) {
    throw ParameterError("project: layer out of range");
  }
  ProjectedFactors out;
  out.layer = t;
  out.matrix = net.phi_at(1);
  for (int l = 2; l <= t; ++l) out.matrix = out.matrix * net.phi_at(l);
  out.weights = net.r;
  for (int l = net.depth(); l >= t + 1; --l) out.weights = net.phi_at(l) * out.weights;
  return out;
}

// Factors whose share of the layer's total weight exceeds `threshold`
// (diagnostic companion to the strict zero-count pruning rule).
inline int effective_width(const GbnNetwork& net, int t, double threshold) {
  const Vector w = project(net, t).weights;
  const double total = w.sum();
  int n = 0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    if (w[k] / total > threshold) ++n;
  }
  return n;
}

struct TreeNode {
  int layer;
  int index;  // 0-based factor index within the layer
  bool operator<(const TreeNode& other) const {
    return std::pair(layer, index) < std::pair(other.layer, other.index);
  }
  bool operator==(const TreeNode& other) const {
    return layer == other.layer && index == other.index;
  }
};

struct TreeEdge {
  TreeNode parent;  // node at layer t
  TreeNode child;   // node at layer t-1
  double weight;    // Phi^(t)(child, parent)
  bool operator<(const TreeEdge& other) const {
    return std::pair(parent, child) < std::pair(other.parent, other.child);
  }
};

// A tree (or union of trees) extracted downward from root nodes. Nodes may
// have several parents; shared nodes appear once.
struct TreeSpec {
  std::vector<TreeNode> roots;
  std::vector<TreeNode> nodes;  // sorted, unique
  std::vector<TreeEdge> edges;  // sorted, unique
  std::vector<double> tau;      // threshold factor per layer (index = layer)
};

// Per-layer threshold factors: tau_t applies to edges from layer t down to
// layer t-1 with cutoff tau_t / K_{t-1}. A single value broadcasts.
inline std::vector<double> tau_per_layer(const GbnNetwork& net, const std::vector<double>& tau) {
  if (tau.empty()) throw ParameterError("tree: tau must not be empty");
  std::vector<double> by_layer(net.depth() + 1, tau.back());
  for (std::size_t i = 0; i < tau.size() && i < by_layer.size() - 1; ++i) {
    by_layer[i + 1] = tau[i];
  }
  return by_layer;
}

inline TreeSpec extract_subnetwork(const GbnNetwork& net, const std::vector<TreeNode>& roots,
                                   const std::vector<double>& tau) {
  const auto tau_by_layer = tau_per_layer(net, tau);
  std::set<TreeNode> nodes;
  std::set<TreeEdge> edges;
  std::deque<TreeNode> frontier;
  for (const auto& root : roots) {
    if (root.layer < 1 || root.layer > net.depth() || root.index < 0 ||
        root.index >= net.width(root.layer)) {
      throw ParameterError("tree: root node out of range");
    }
    if (nodes.insert(root).second) frontier.push_back(root);
  }
  while (!frontier.empty()) {
    const TreeNode node = frontier.front();
    frontier.pop_front();
    if (node.layer <= 1) continue;
    const Matrix& phi = net.phi_at(node.layer);
    const int below = static_cast<int>(phi.rows());
    const double cutoff = tau_by_layer[node.layer] / static_cast<double>(below);
    for (int child = 0; child < below; ++child) {
      const double weight = phi(child, node.index);
      if (weight > cutoff) {
        const TreeNode child_node{node.layer - 1, child};
        edges.insert({node, child_node, weight});
        if (nodes.insert(child_node).second) frontier.push_back(child_node);
      }
    }
  }
  TreeSpec spec;
  spec.roots = roots;
  spec.nodes.assign(nodes.begin(), nodes.end());
  spec.edges.assign(edges.begin(), edges.end());
  spec.tau = tau_by_layer;
  return spec;
}

inline TreeSpec extract_tree(const GbnNetwork& net, TreeNode root,
                             const std::vector<double>& tau) {
  return extract_subnetwork(net, {root}, tau);
}

// Term ids of node k ranked by projected probability, ties broken toward the
// lower term id; n is clamped to the vocabulary size.
inline std::vector<int> top_terms(const ProjectedFactors& projected, int node, int n) {
  const int v_count = static_cast<int>(projected.matrix.rows());
  if (node < 0 || node >= projected.matrix.cols()) {
    throw ParameterError("top_terms: node out of range");
  }
  n = std::min(n, v_count);
  std::vector<int> order(v_count);
  for (int v = 0; v < v_count; ++v) order[v] = v;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (projected.matrix(a, node) != projected.matrix(b, node)) {
      return projected.matrix(a, node) > projected.matrix(b, node);
    }
    return a < b;
  });
  order.resize(n);
  return order;
}

// ---------------------------------------------------------------------------
// Graph export: DOT with edge penwidth proportional to sqrt(weight), plus a
// JSON twin carrying the exact weights.
// ---------------------------------------------------------------------------

using NodeLabeler = std::function<std::string(const TreeNode&)>;

inline std::string default_node_label(const TreeNode& node) {
  return std::to_string(node.layer) + ":" + std::to_string(node.index + 1);
}

inline std::string to_dot(const TreeSpec& spec, const NodeLabeler& labeler,
                          const std::string& header_comment = "") {
  std::ostringstream out;
  if (!header_comment.empty()) {
    std::istringstream lines(header_comment);
    std::string line;
    while (std::getline(lines, line)) out << "// " << line << "\n";
  }
  out << "digraph gbn {\n  rankdir=TB;\n  node [shape=box];\n";
  auto id_of = [](const TreeNode& n) {
    return "\"L" + std::to_string(n.layer) + "_" + std::to_string(n.index + 1) + "\"";
  };
  for (const auto& node : spec.nodes) {
    std::string label = labeler ? labeler(node) : default_node_label(node);
    std::string escaped;
    for (char ch : label) {
      if (ch == '"' || ch == '\\') escaped.push_back('\\');
      escaped.push_back(ch == '\n' ? ' ' : ch);
    }
    out << "  " << id_of(node) << " [label=\"" << escaped << "\"];\n";
  }
  out.precision(6);
  for (const auto& edge : spec.edges) {
    out << "  " << id_of(edge.parent) << " -> " << id_of(edge.child)
        << " [penwidth=" << std::max(0.25, 8.0 * std::sqrt(edge.weight)) << "];\n";
  }
  out << "}\n";
  return out.str();
}

inline std::string tree_to_json(const TreeSpec& spec, const GbnNetwork& net) {
  nlohmann::json j;
  j["tau"] = spec.tau;
  j["roots"] = nlohmann::json::array();
  for (const auto& root : spec.roots) {
    j["roots"].push_back({{"layer", root.layer}, {"node", root.index + 1}});
  }
  j["nodes"] = nlohmann::json::array();
  for (const auto& node : spec.nodes) {
    const Vector weights = project(net, node.layer).weights;
    j["nodes"].push_back({{"layer", node.layer},
                          {"node", node.index + 1},
                          {"weight", weights[node.index]}});
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& edge : spec.edges) {
    j["edges"].push_back({{"from_layer", edge.parent.layer},
                          {"from_node", edge.parent.index + 1},
                          {"to_layer", edge.child.layer},
                          {"to_node", edge.child.index + 1},
                          {"weight", edge.weight}});
  }
  return j.dump(1);
}

// ---------------------------------------------------------------------------
// Synthetic observations: draw theta^(T) ~ Gam(r, 1/c^(T+1)), pass it down
// through the network one gamma layer at a time, and return the data-layer
// Poisson rates (plus count draws for the count link).
// ---------------------------------------------------------------------------

struct SyntheticDocs {
  Matrix rates;             // V x num_docs, Phi^(1) theta^(1)
  Matrix theta_top;         // K_T x num_docs
  Matrix theta_bottom;      // K_1 x num_docs
  SparseCountMatrix counts; // Poisson draws, count link only (else empty)
};

inline SyntheticDocs generate_synthetic(const GbnNetwork& net, int num_docs,
                                        const std::vector<double>& c_override,
                                        RngStream& rng) {
  if (num_docs < 1) throw ParameterError("generate: num_docs must be positive");
  // Scales c^(2)..c^(T+1): explicit override wins, else the medians stored by
  // training. One override value broadcasts to every layer.
  std::vector<double> c_levels;
  if (!c_override.empty()) {
    if (c_override.size() == 1) {
      c_levels.assign(net.depth(), c_override[0]);
    } else if (static_cast<int>(c_override.size()) == net.depth()) {
      c_levels = c_override;
    } else {
      throw ConfigError("generate: need one c value or one per layer scale (T values)");
    }
  } else if (net.c_median.has_value() &&
             static_cast<int>(net.c_median->size()) == net.depth()) {
    c_levels = *net.c_median;
  } else {
    throw ConfigError("generate: network carries no stored c medians; supply an override");
  }
  for (double c : c_levels) {
    if (!(c > 0.0)) throw ConfigError("generate: c scales must be positive");
  }

  const int t_depth = net.depth();
  SyntheticDocs out;
  Matrix theta(net.width(t_depth), num_docs);
  const double c_top = c_levels[t_depth - 1];  // c^(T+1)
  for (int j = 0; j < num_docs; ++j) {
    for (int k = 0; k < net.width(t_depth); ++k) {
      theta(k, j) = sample_gamma(net.r[k], 1.0 / c_top, rng);
    }
  }
  out.theta_top = theta;
  for (int t = t_depth - 1; t >= 1; --t) {
    const Matrix shape = net.phi_at(t + 1) * theta;
    const double c_t = c_levels[t - 1];  // c^(t+1)
    theta.resize(net.width(t), num_docs);
    for (int j = 0; j < num_docs; ++j) {
      for (int k = 0; k < net.width(t); ++k) {
        theta(k, j) = sample_gamma(shape(k, j), 1.0 / c_t, rng);
      }
    }
  }
  out.theta_bottom = theta;
  out.rates = net.phi_at(1) * theta;

  if (net.link == LinkType::kCount) {
    std::vector<std::tuple<int, int, std::int64_t>> triples;
    for (int j = 0; j < num_docs; ++j) {
      for (int v = 0; v < out.rates.rows(); ++v) {
        const std::int64_t x = sample_poisson(out.rates(v, j), rng);
        if (x > 0) triples.emplace_back(v, j, x);
      }
    }
    out.counts = SparseCountMatrix::from_triples(static_cast<int>(out.rates.rows()),
                                                 num_docs, triples);
  }
  return out;
}

}  // namespace gbn
