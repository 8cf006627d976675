#pragma once

// Skeleton sequences, graph topology, modality streams, and the synthetic
// action dataset used in place of motion-capture corpora.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "pstl/common.hpp"

namespace pstl {

// Dense [C x T x V] coordinate array plus labels. Index order is channel,
// then frame, then joint, with the joint axis contiguous.
struct SkeletonSequence {
  int C = 0;
  int T = 0;
  int V = 0;
  std::vector<double> data;
  int label = 0;
  int subject = 0;

  SkeletonSequence() = default;
  SkeletonSequence(int c, int t, int v, double fill = 0.0)
      : C(c), T(t), V(v), data(static_cast<size_t>(c) * t * v, fill) {}

  double& at(int c, int t, int v) { return data[(static_cast<size_t>(c) * T + t) * V + v]; }
  double at(int c, int t, int v) const { return data[(static_cast<size_t>(c) * T + t) * V + v]; }

  void validate(int num_classes = -1) const {
    require(C >= 1 && T >= 2 && V >= 2, errc::invalid_argument,
            "sequence: need C >= 1, T >= 2, V >= 2, got C=" + std::to_string(C) +
                " T=" + std::to_string(T) + " V=" + std::to_string(V));
    require(data.size() == static_cast<size_t>(C) * T * V, errc::shape_mismatch,
            "sequence: data length does not match C*T*V");
    for (double x : data)
      require(std::isfinite(x), errc::numeric_fault, "sequence: non-finite coordinate");
    if (num_classes >= 0)
      require(label >= 0 && label < num_classes, errc::invalid_argument,
              "sequence: label " + std::to_string(label) + " outside [0, " +
                  std::to_string(num_classes) + ")");
  }
};

// Undirected joint graph with left/right flip permutation and a 5-way body
// part assignment (left/right arms, left/right legs, torso).
struct GraphTopology {
  int num_joints = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> flip_permutation;
  std::vector<int> part_assignment;

  static constexpr int kNumParts = 5;

  void validate(bool require_connected = true) const {
    require(num_joints >= 1, errc::invalid_argument, "topology: need at least one joint");
    std::vector<std::vector<bool>> seen(static_cast<size_t>(num_joints),
                                        std::vector<bool>(static_cast<size_t>(num_joints), false));
    for (auto [a, b] : edges) {
      require(a >= 0 && a < num_joints && b >= 0 && b < num_joints, errc::invalid_argument,
              "topology: edge endpoint out of range");
      require(a != b, errc::invalid_argument, "topology: self-loop edge");
      require(!seen[static_cast<size_t>(a)][static_cast<size_t>(b)], errc::invalid_argument,
              "topology: duplicate edge");
      seen[static_cast<size_t>(a)][static_cast<size_t>(b)] = true;
      seen[static_cast<size_t>(b)][static_cast<size_t>(a)] = true;
    }
    if (require_connected) {
      std::vector<bool> visited(static_cast<size_t>(num_joints), false);
      std::queue<int> q;
      q.push(0);
      visited[0] = true;
      int count = 1;
      while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (auto [a, b] : edges) {
          const int other = a == u ? b : (b == u ? a : -1);
          if (other >= 0 && !visited[static_cast<size_t>(other)]) {
            visited[static_cast<size_t>(other)] = true;
            ++count;
            q.push(other);
          }
        }
      }
      require(count == num_joints, errc::invalid_argument, "topology: graph is not connected");
    }
    require(static_cast<int>(flip_permutation.size()) == num_joints, errc::invalid_argument,
            "topology: flip permutation size mismatch");
    for (int i = 0; i < num_joints; ++i) {
      const int j = flip_permutation[static_cast<size_t>(i)];
      require(j >= 0 && j < num_joints, errc::invalid_argument,
              "topology: flip permutation out of range");
      require(flip_permutation[static_cast<size_t>(j)] == i, errc::invalid_argument,
              "topology: flip permutation is not an involution");
    }
    require(static_cast<int>(part_assignment.size()) == num_joints, errc::invalid_argument,
            "topology: part assignment size mismatch");
    for (int p : part_assignment)
      require(p >= 0 && p < kNumParts, errc::invalid_argument,
              "topology: part id outside the 5 body parts");
  }

  // Dense 0/1 adjacency, row-major V x V.
  std::vector<double> adjacency() const {
    std::vector<double> a(static_cast<size_t>(num_joints) * num_joints, 0.0);
    for (auto [u, v] : edges) {
      a[static_cast<size_t>(u) * num_joints + v] = 1.0;
      a[static_cast<size_t>(v) * num_joints + u] = 1.0;
    }
    return a;
  }
};

inline std::vector<int> degree_vector(const GraphTopology& topo) {
  std::vector<int> deg(static_cast<size_t>(topo.num_joints), 0);
  for (auto [u, v] : topo.edges) {
    ++deg[static_cast<size_t>(u)];
    ++deg[static_cast<size_t>(v)];
  }
  return deg;
}

// ------------------------------------------------------------- topologies

// 10-joint stick figure used by the desk-scale synthetic dataset.
// 0 pelvis, 1 chest, 2 head, 3 left hand, 4 right hand,
// 5 left knee, 6 left foot, 7 right knee, 8 right foot, 9 neck.
inline GraphTopology desk10_topology() {
  GraphTopology t;
  t.num_joints = 10;
  t.edges = {{0, 1}, {1, 9}, {9, 2}, {9, 3}, {9, 4}, {0, 5}, {5, 6}, {0, 7}, {7, 8}};
  t.flip_permutation = {0, 1, 2, 4, 3, 7, 8, 5, 6, 9};
  // parts: 0 torso, 1 left arm, 2 right arm, 3 left leg, 4 right leg
  t.part_assignment = {0, 0, 0, 1, 2, 3, 3, 4, 4, 0};
  t.validate();
  return t;
}

// 25-joint Kinect-v2-style tree (spine, arms with hand tips/thumbs, legs).
inline GraphTopology ntu25_topology() {
  GraphTopology t;
  t.num_joints = 25;
  // 1-based joint pairs, converted below.
  const std::vector<std::pair<int, int>> pairs = {
      {1, 2},   {2, 21},  {3, 21},  {4, 3},   {5, 21},  {6, 5},   {7, 6},   {8, 7},
      {9, 21},  {10, 9},  {11, 10}, {12, 11}, {13, 1},  {14, 13}, {15, 14}, {16, 15},
      {17, 1},  {18, 17}, {19, 18}, {20, 19}, {22, 23}, {23, 8},  {24, 25}, {25, 12}};
  for (auto [a, b] : pairs) t.edges.emplace_back(a - 1, b - 1);
  const std::vector<int> flip1 = {1,  2,  3,  4,  9,  10, 11, 12, 5,  6,  7,  8, 17,
                                  18, 19, 20, 13, 14, 15, 16, 21, 24, 25, 22, 23};
  for (int j : flip1) t.flip_permutation.push_back(j - 1);
  t.part_assignment.assign(25, 0);
  auto set_part = [&](std::initializer_list<int> joints1, int part) {
    for (int j : joints1) t.part_assignment[static_cast<size_t>(j - 1)] = part;
  };
  set_part({1, 2, 3, 4, 21}, 0);            // torso
  set_part({5, 6, 7, 8, 22, 23}, 1);        // left arm
  set_part({9, 10, 11, 12, 24, 25}, 2);     // right arm
  set_part({13, 14, 15, 16}, 3);            // left leg
  set_part({17, 18, 19, 20}, 4);            // right leg
  t.validate();
  return t;
}

inline GraphTopology topology_by_name(const std::string& name) {
  if (name == "desk10") return desk10_topology();
  if (name == "ntu25") return ntu25_topology();
  fail(errc::config, "unknown topology preset '" + name + "' (expected desk10 or ntu25)");
}

// --------------------------------------------------------- modality streams

// Frame-to-frame displacement. With pad_to_input_length the trailing frame is
// zero-filled so the result keeps the input's T (required when the motion
// stream feeds the same encoder as the joint stream).
inline SkeletonSequence to_motion_stream(const SkeletonSequence& seq,
                                         bool pad_to_input_length = false) {
  require(seq.T >= 2, errc::invalid_argument,
          "motion stream: need at least 2 frames, got " + std::to_string(seq.T));
  SkeletonSequence out(seq.C, pad_to_input_length ? seq.T : seq.T - 1, seq.V);
  out.label = seq.label;
  out.subject = seq.subject;
  for (int c = 0; c < seq.C; ++c)
    for (int t = 0; t + 1 < seq.T; ++t)
      for (int v = 0; v < seq.V; ++v) out.at(c, t, v) = seq.at(c, t + 1, v) - seq.at(c, t, v);
  return out;
}

// Parent pointers of the joint tree via breadth-first search from root.
// parent[root] == root.
inline std::vector<int> bfs_parents(const GraphTopology& topo, int root) {
  require(root >= 0 && root < topo.num_joints, errc::invalid_argument,
          "bfs: root joint out of range");
  std::vector<std::vector<int>> nbr(static_cast<size_t>(topo.num_joints));
  for (auto [u, v] : topo.edges) {
    nbr[static_cast<size_t>(u)].push_back(v);
    nbr[static_cast<size_t>(v)].push_back(u);
  }
  std::vector<int> parent(static_cast<size_t>(topo.num_joints), -1);
  std::queue<int> q;
  q.push(root);
  parent[static_cast<size_t>(root)] = root;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int w : nbr[static_cast<size_t>(u)])
      if (parent[static_cast<size_t>(w)] < 0) {
        parent[static_cast<size_t>(w)] = u;
        q.push(w);
      }
  }
  for (int p : parent)
    require(p >= 0, errc::invalid_argument, "bfs: topology is not connected");
  return parent;
}

// Bone vectors: coords(joint) - coords(parent along the BFS tree from root);
// the root bone is zero. Requires a tree so every non-root joint has a
// unique parent.
inline SkeletonSequence to_bone_stream(const SkeletonSequence& seq, const GraphTopology& topo,
                                       int root = 0) {
  require(seq.V == topo.num_joints, errc::shape_mismatch,
          "bone stream: sequence joint count differs from topology");
  require(static_cast<int>(topo.edges.size()) == topo.num_joints - 1, errc::invalid_argument,
          "bone stream: topology must be a tree (got " + std::to_string(topo.edges.size()) +
              " edges for " + std::to_string(topo.num_joints) + " joints)");
  const auto parent = bfs_parents(topo, root);
  SkeletonSequence out(seq.C, seq.T, seq.V);
  out.label = seq.label;
  out.subject = seq.subject;
  for (int c = 0; c < seq.C; ++c)
    for (int t = 0; t < seq.T; ++t)
      for (int v = 0; v < seq.V; ++v) {
        const int p = parent[static_cast<size_t>(v)];
        out.at(c, t, v) = v == root ? 0.0 : seq.at(c, t, v) - seq.at(c, t, p);
      }
  return out;
}

// Linear interpolation along the frame axis to exactly target_frames frames;
// endpoints are preserved.
inline SkeletonSequence resize_temporal(const SkeletonSequence& seq, int target_frames) {
  require(target_frames >= 2, errc::invalid_argument,
          "resize: target frame count must be >= 2");
  SkeletonSequence out(seq.C, target_frames, seq.V);
  out.label = seq.label;
  out.subject = seq.subject;
  const double step = static_cast<double>(seq.T - 1) / static_cast<double>(target_frames - 1);
  for (int t = 0; t < target_frames; ++t) {
    const double pos = static_cast<double>(t) * step;
    int lo = static_cast<int>(std::floor(pos));
    if (lo > seq.T - 2) lo = seq.T - 2;
    const int hi = lo + 1;
    const double frac = pos - static_cast<double>(lo);
    for (int c = 0; c < seq.C; ++c)
      for (int v = 0; v < seq.V; ++v) {
        const double a = seq.at(c, lo, v);
        const double b = seq.at(c, hi, v);
        out.at(c, t, v) = a + frac * (b - a);
      }
  }
  return out;
}

// ------------------------------------------------------------------ dataset

enum class Split : uint8_t { train = 0, test = 1 };

struct Dataset {
  std::vector<SkeletonSequence> sequences;
  std::vector<Split> split;
  GraphTopology topology;
  int num_classes = 0;

  void validate() const {
    topology.validate();
    require(split.size() == sequences.size(), errc::invalid_argument,
            "dataset: split size mismatch");
    require(num_classes >= 1, errc::invalid_argument, "dataset: need at least one class");
    require(!sequences.empty(), errc::invalid_argument, "dataset: empty");
    const int C = sequences.front().C, T = sequences.front().T, V = sequences.front().V;
    for (const auto& s : sequences) {
      s.validate(num_classes);
      require(s.C == C && s.T == T && s.V == V, errc::shape_mismatch,
              "dataset: sequences must share C, T, V");
    }
    require(V == topology.num_joints, errc::shape_mismatch,
            "dataset: joint count differs from topology");
  }

  std::vector<int> indices_of(Split s) const {
    std::vector<int> out;
    for (size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) out.push_back(static_cast<int>(i));
    return out;
  }
};

enum class Modality { joint, motion, bone };

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::joint: return "J";
    case Modality::motion: return "M";
    case Modality::bone: return "B";
  }
  return "?";
}

inline Modality modality_from_name(const std::string& s) {
  if (s == "J" || s == "joint") return Modality::joint;
  if (s == "M" || s == "motion") return Modality::motion;
  if (s == "B" || s == "bone") return Modality::bone;
  fail(errc::config, "unknown modality '" + s + "' (expected J, M, or B)");
}

// Derives the requested modality for every sequence. Motion keeps T via a
// trailing zero frame; bone differences run along the BFS tree from root.
inline Dataset apply_modality(const Dataset& data, Modality m, int bone_root = 0) {
  if (m == Modality::joint) return data;
  Dataset out = data;
  for (auto& s : out.sequences)
    s = m == Modality::motion ? to_motion_stream(s, true) : to_bone_stream(s, data.topology, bone_root);
  return out;
}

// ------------------------------------------------------- synthetic dataset

struct SyntheticConfig {
  int num_classes = 4;
  int train_per_class = 50;
  int test_per_class = 25;
  int frames = 50;
  double noise = 0.02;
  std::string topology = "desk10";
  int num_subjects = 8;
};

namespace detail {

// Rest pose for the desk10 figure; other topologies get a deterministic
// pseudo-pose spread along the joint index.
inline std::vector<std::array<double, 3>> rest_pose(const GraphTopology& topo) {
  std::vector<std::array<double, 3>> pose(static_cast<size_t>(topo.num_joints));
  if (topo.num_joints == 10) {
    pose = {{{0.0, 0.0, 0.0}},    {{0.0, 0.45, 0.0}},  {{0.0, 1.05, 0.0}},
            {{0.55, 0.85, 0.1}},  {{-0.55, 0.85, 0.1}}, {{0.18, -0.55, 0.0}},
            {{0.2, -1.1, 0.05}},  {{-0.18, -0.55, 0.0}}, {{-0.2, -1.1, 0.05}},
            {{0.0, 0.85, 0.0}}};
  } else {
    for (int v = 0; v < topo.num_joints; ++v) {
      const double a = 2.0 * 3.14159265358979323846 * v / topo.num_joints;
      pose[static_cast<size_t>(v)] = {0.5 * std::cos(a), 0.1 * v, 0.5 * std::sin(a)};
    }
  }
  return pose;
}

struct MotionFamily {
  std::vector<int> joints;   // joints carrying the class motion
  double frequency;          // cycles over the whole sequence
  double amplitude;
  int axis;                  // dominant axis of oscillation
  double secondary_scale;    // relative amplitude on the next axis
};

// One parametric family per class: a distinct joint subset oscillating at a
// class-specific frequency and amplitude, so class evidence is spread over
// several joints rather than pinned to one.
inline MotionFamily motion_family(int cls, const GraphTopology& topo) {
  const int V = topo.num_joints;
  std::vector<std::vector<int>> part_joints(GraphTopology::kNumParts);
  for (int v = 0; v < V; ++v)
    part_joints[static_cast<size_t>(topo.part_assignment[static_cast<size_t>(v)])].push_back(v);
  MotionFamily f;
  switch (cls % 4) {
    case 0:  // arms + head swing
      f.joints = part_joints[1];
      f.joints.insert(f.joints.end(), part_joints[2].begin(), part_joints[2].end());
      f.joints.insert(f.joints.end(), part_joints[0].begin(), part_joints[0].end());
      f.frequency = 1.0;
      f.amplitude = 0.35;
      f.axis = 0;
      f.secondary_scale = 0.4;
      break;
    case 1:  // legs march
      f.joints = part_joints[3];
      f.joints.insert(f.joints.end(), part_joints[4].begin(), part_joints[4].end());
      f.joints.insert(f.joints.end(), part_joints[0].begin(), part_joints[0].end());
      f.frequency = 2.0;
      f.amplitude = 0.3;
      f.axis = 1;
      f.secondary_scale = 0.3;
      break;
    case 2:  // whole-body bounce
      for (int v = 0; v < V; ++v) f.joints.push_back(v);
      f.frequency = 3.0;
      f.amplitude = 0.22;
      f.axis = 1;
      f.secondary_scale = 0.15;
      break;
    default:  // upper-body twist
      f.joints = part_joints[0];
      f.joints.insert(f.joints.end(), part_joints[1].begin(), part_joints[1].end());
      f.joints.insert(f.joints.end(), part_joints[2].begin(), part_joints[2].end());
      f.frequency = 1.5;
      f.amplitude = 0.45;
      f.axis = 2;
      f.secondary_scale = 0.6;
      break;
  }
  // Higher class indices reuse the four shapes at shifted frequencies.
  f.frequency += 0.7 * (cls / 4);
  std::sort(f.joints.begin(), f.joints.end());
  f.joints.erase(std::unique(f.joints.begin(), f.joints.end()), f.joints.end());
  return f;
}

inline float quantize_f32(double x) { return static_cast<float>(x); }

}  // namespace detail

// Deterministic synthetic action dataset: each class is a parametric motion
// family over a fixed topology. All stored coordinates are rounded to float32
// so the on-disk format round-trips bit-exactly.
inline Dataset generate_synthetic(const SyntheticConfig& cfg, uint64_t seed) {
  require(cfg.num_classes >= 2, errc::config, "synthetic: need at least 2 classes");
  require(cfg.train_per_class >= 1 && cfg.test_per_class >= 0, errc::config,
          "synthetic: sequence counts must be positive");
  require(cfg.frames >= 2, errc::config, "synthetic: need at least 2 frames");
  require(cfg.noise >= 0.0, errc::config, "synthetic: noise level must be >= 0");

  Dataset data;
  data.topology = topology_by_name(cfg.topology);
  data.num_classes = cfg.num_classes;
  const auto pose = detail::rest_pose(data.topology);
  const int V = data.topology.num_joints;
  const int T = cfg.frames;
  const double two_pi = 6.283185307179586476925286766559;

  Rng root(seed);
  int next_subject = 0;
  for (int cls = 0; cls < cfg.num_classes; ++cls) {
    const auto family = detail::motion_family(cls, data.topology);
    const int total = cfg.train_per_class + cfg.test_per_class;
    for (int i = 0; i < total; ++i) {
      Rng rng = root.fork(static_cast<uint64_t>(cls) * 1000003ULL + static_cast<uint64_t>(i));
      SkeletonSequence seq(3, T, V);
      seq.label = cls;
      seq.subject = next_subject;
      next_subject = (next_subject + 1) % std::max(1, cfg.num_subjects);

      const double phase = rng.uniform(0.0, two_pi);
      const double amp = family.amplitude * rng.uniform(0.8, 1.2);
      const double freq = family.frequency * rng.uniform(0.95, 1.05);
      std::vector<double> joint_phase(static_cast<size_t>(V), 0.0);
      for (auto& p : joint_phase) p = rng.uniform(-0.4, 0.4);

      std::vector<bool> moving(static_cast<size_t>(V), false);
      for (int j : family.joints) moving[static_cast<size_t>(j)] = true;

      for (int t = 0; t < T; ++t) {
        const double phi = two_pi * freq * t / T + phase;
        for (int v = 0; v < V; ++v) {
          const auto& base = pose[static_cast<size_t>(v)];
          double offset[3] = {0.0, 0.0, 0.0};
          if (moving[static_cast<size_t>(v)]) {
            const double local = phi + joint_phase[static_cast<size_t>(v)];
            offset[family.axis] = amp * std::sin(local);
            offset[(family.axis + 1) % 3] = amp * family.secondary_scale * std::cos(local);
          }
          for (int c = 0; c < 3; ++c) {
            const double noisy = base[static_cast<size_t>(c)] + offset[c] +
                                 (cfg.noise > 0.0 ? cfg.noise * rng.normal() : 0.0);
            seq.at(c, t, v) = detail::quantize_f32(noisy);
          }
        }
      }
      data.sequences.push_back(std::move(seq));
      data.split.push_back(i < cfg.train_per_class ? Split::train : Split::test);
    }
  }
  data.validate();
  return data;
}

}  // namespace pstl
