#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "aimclr/skeleton.hpp"

namespace aimclr {

SkeletonSequence SkeletonSequence::zeros(std::size_t c, std::size_t t, std::size_t v,
                                         std::size_t p) {
  SkeletonSequence s;
  s.channels = c;
  s.frames = t;
  s.joints = v;
  s.persons = p;
  s.data.assign(c * t * v * p, 0.0);
  return s;
}

bool SkeletonSequence::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void SkeletonGraph::validate() const {
  const std::size_t V = num_joints;
  if (V == 0) throw std::invalid_argument("graph: num_joints must be positive");
  if (center >= V) throw std::invalid_argument("graph: center out of range");
  if (edges.size() != V - 1) {
    throw std::invalid_argument("graph: a tree over " + std::to_string(V) + " joints needs " +
                                std::to_string(V - 1) + " edges, got " +
                                std::to_string(edges.size()));
  }
  std::vector<int> parent_count(V, 0);
  for (const auto& [p, c] : edges) {
    if (p >= V || c >= V) throw std::invalid_argument("graph: edge index out of range");
    if (c == center) throw std::invalid_argument("graph: center cannot be a child");
    if (++parent_count[c] > 1) {
      throw std::invalid_argument("graph: joint " + std::to_string(c) + " has two parents");
    }
  }
  std::vector<bool> reached(V, false);
  reached[center] = true;
  std::vector<std::size_t> frontier{center};
  while (!frontier.empty()) {
    const std::size_t u = frontier.back();
    frontier.pop_back();
    for (const auto& [p, c] : edges) {
      if (p == u && !reached[c]) {
        reached[c] = true;
        frontier.push_back(c);
      }
    }
  }
  for (std::size_t v = 0; v < V; ++v) {
    if (!reached[v]) {
      throw std::invalid_argument("graph: joint " + std::to_string(v) +
                                  " is not reachable from the center");
    }
  }
  std::set<std::size_t> used;
  for (const auto& [l, r] : left_right_pairs) {
    if (l >= V || r >= V) throw std::invalid_argument("graph: pair index out of range");
    if (l == r || l == center || r == center) {
      throw std::invalid_argument("graph: left/right pair must join two off-center joints");
    }
    if (!used.insert(l).second || !used.insert(r).second) {
      throw std::invalid_argument("graph: left/right pairs overlap");
    }
  }
}

std::vector<std::size_t> SkeletonGraph::parents() const {
  std::vector<std::size_t> parent(num_joints);
  for (std::size_t v = 0; v < num_joints; ++v) parent[v] = v;
  for (const auto& [p, c] : edges) parent[c] = p;
  return parent;
}

SkeletonGraph make_tree_graph(std::size_t num_joints) {
  if (num_joints == 0) throw std::invalid_argument("make_tree_graph: need at least one joint");
  if (num_joints == 25) return ntu25_graph();
  SkeletonGraph g;
  g.num_joints = num_joints;
  g.center = 0;
  const std::size_t side = std::min((num_joints + 1) / 3, (num_joints - 1) / 2);
  const std::size_t spine = num_joints - 1 - 2 * side;
  std::size_t prev = 0;
  for (std::size_t i = 1; i <= spine; ++i) {
    g.edges.emplace_back(prev, i);
    prev = i;
  }
  const std::size_t left0 = spine + 1, right0 = spine + 1 + side;
  for (std::size_t i = 0; i < side; ++i) {
    g.edges.emplace_back(i == 0 ? 0 : left0 + i - 1, left0 + i);
    g.edges.emplace_back(i == 0 ? 0 : right0 + i - 1, right0 + i);
    g.left_right_pairs.emplace_back(left0 + i, right0 + i);
  }
  return g;
}

SkeletonGraph ntu25_graph() {
  // 1-based (parent, child) pairs oriented away from joint 21.
  static const std::pair<int, int> kEdges[] = {
      {21, 2},  {2, 1},   {21, 3},  {3, 4},   {21, 5},  {5, 6},   {6, 7},   {7, 8},
      {8, 23},  {23, 22}, {21, 9},  {9, 10},  {10, 11}, {11, 12}, {12, 25}, {25, 24},
      {1, 13},  {13, 14}, {14, 15}, {15, 16}, {1, 17},  {17, 18}, {18, 19}, {19, 20}};
  static const std::pair<int, int> kPairs[] = {{5, 9},   {6, 10},  {7, 11},  {8, 12},
                                               {22, 24}, {23, 25}, {13, 17}, {14, 18},
                                               {15, 19}, {16, 20}};
  SkeletonGraph g;
  g.num_joints = 25;
  g.center = 20;
  for (auto [p, c] : kEdges) g.edges.emplace_back(p - 1, c - 1);
  for (auto [l, r] : kPairs) g.left_right_pairs.emplace_back(l - 1, r - 1);
  return g;
}

Stream parse_stream(const std::string& name) {
  if (name == "joint") return Stream::Joint;
  if (name == "bone") return Stream::Bone;
  if (name == "motion") return Stream::Motion;
  throw std::invalid_argument("unknown stream '" + name + "' (expected joint|bone|motion)");
}

std::string stream_name(Stream s) {
  switch (s) {
    case Stream::Joint: return "joint";
    case Stream::Bone: return "bone";
    case Stream::Motion: return "motion";
  }
  return "joint";
}

SkeletonSequence to_bone_stream(const SkeletonSequence& x, const SkeletonGraph& g) {
  if (x.joints != g.num_joints) {
    throw std::invalid_argument("to_bone_stream: sequence has " + std::to_string(x.joints) +
                                " joints, graph has " + std::to_string(g.num_joints));
  }
  SkeletonSequence out = SkeletonSequence::zeros(x.channels, x.frames, x.joints, x.persons);
  out.label = x.label;
  for (const auto& [parent, child] : g.edges) {
    for (std::size_t c = 0; c < x.channels; ++c) {
      for (std::size_t t = 0; t < x.frames; ++t) {
        for (std::size_t p = 0; p < x.persons; ++p) {
          out.at(c, t, child, p) = x.at(c, t, child, p) - x.at(c, t, parent, p);
        }
      }
    }
  }
  return out;
}

SkeletonSequence to_motion_stream(const SkeletonSequence& x) {
  SkeletonSequence out = SkeletonSequence::zeros(x.channels, x.frames, x.joints, x.persons);
  out.label = x.label;
  for (std::size_t c = 0; c < x.channels; ++c) {
    for (std::size_t t = 1; t < x.frames; ++t) {
      for (std::size_t v = 0; v < x.joints; ++v) {
        for (std::size_t p = 0; p < x.persons; ++p) {
          out.at(c, t, v, p) = x.at(c, t, v, p) - x.at(c, t - 1, v, p);
        }
      }
    }
  }
  return out;
}

SkeletonSequence to_stream(const SkeletonSequence& x, const SkeletonGraph& g, Stream s) {
  switch (s) {
    case Stream::Joint: return x;
    case Stream::Bone: return to_bone_stream(x, g);
    case Stream::Motion: return to_motion_stream(x);
  }
  return x;
}

}  // namespace aimclr
