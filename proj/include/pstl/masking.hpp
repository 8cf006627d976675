#pragma once

// Central Spatial Masking (CSM) and Motion Attention Temporal Masking (MATM).
//
// CSM samples joints to drop with probability proportional to degree
// centrality and removes them from both the data and the adjacency, so masked
// joints never enter the feature computation. MATM ranks frame transitions by
// motion energy, masks the top-K frames plus K random extras, and removes
// them from the temporal axis.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pstl/common.hpp"
#include "pstl/skeleton.hpp"

namespace pstl {

struct MaskConfig {
  int n_mask = 9;  // joints removed by CSM
  int top_k = 10;  // K: key frames (and random frames) removed by MATM
};

// --------------------------------------------------------------------- CSM

struct SpatialMaskPlan {
  std::vector<int> masked_joints;      // sorted ascending
  std::vector<double> probabilities;   // the degree-proportional weights used
};

// p_i = d_i / sum_j d_j
inline std::vector<double> csm_probabilities(const std::vector<int>& degrees) {
  double total = 0.0;
  for (int d : degrees) {
    require(d >= 1, errc::invalid_argument,
            "csm: isolated joint (degree 0) has no masking probability");
    total += d;
  }
  require(total > 0.0, errc::invalid_argument, "csm: empty degree vector");
  std::vector<double> p(degrees.size());
  for (size_t i = 0; i < degrees.size(); ++i) p[i] = degrees[i] / total;
  return p;
}

inline std::vector<double> csm_probabilities(const GraphTopology& topo) {
  return csm_probabilities(degree_vector(topo));
}

// Sequential weighted sampling without replacement: each draw picks a joint
// with probability proportional to p among the remaining joints. At least two
// joints must survive.
inline SpatialMaskPlan sample_spatial_mask(const std::vector<double>& probabilities, int n_mask,
                                           Rng& rng) {
  const int v = static_cast<int>(probabilities.size());
  require(n_mask >= 1 && n_mask <= v - 2, errc::invalid_argument,
          "csm: n_mask must lie in [1, V-2], got " + std::to_string(n_mask) + " for V=" +
              std::to_string(v));
  SpatialMaskPlan plan;
  plan.probabilities = probabilities;
  std::vector<double> weight = probabilities;
  for (int k = 0; k < n_mask; ++k) {
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    double r = rng.uniform01() * total;
    int chosen = -1;
    for (int i = 0; i < v; ++i) {
      if (weight[static_cast<size_t>(i)] <= 0.0) continue;
      r -= weight[static_cast<size_t>(i)];
      if (r < 0.0) {
        chosen = i;
        break;
      }
    }
    if (chosen < 0) {  // numerical edge: take the last joint still in play
      for (int i = v - 1; i >= 0; --i)
        if (weight[static_cast<size_t>(i)] > 0.0) {
          chosen = i;
          break;
        }
    }
    weight[static_cast<size_t>(chosen)] = 0.0;
    plan.masked_joints.push_back(chosen);
  }
  std::sort(plan.masked_joints.begin(), plan.masked_joints.end());
  return plan;
}

struct TopologyRestriction {
  GraphTopology topology;
  std::vector<int> kept;        // new index -> old joint id
  std::vector<int> old_to_new;  // -1 for masked joints
};

// Induced subgraph on the unmasked joints. Equivalent to deleting the masked
// rows and columns of the adjacency matrix. The survivor graph may be
// disconnected; its flip permutation collapses to identity wherever a
// partner joint was removed.
inline TopologyRestriction restrict_topology(const GraphTopology& topo,
                                             const std::vector<int>& masked_joints) {
  const int v = topo.num_joints;
  std::vector<bool> masked(static_cast<size_t>(v), false);
  for (int j : masked_joints) {
    require(j >= 0 && j < v, errc::invalid_argument, "restrict: masked joint out of range");
    masked[static_cast<size_t>(j)] = true;
  }
  TopologyRestriction out;
  out.old_to_new.assign(static_cast<size_t>(v), -1);
  for (int i = 0; i < v; ++i)
    if (!masked[static_cast<size_t>(i)]) {
      out.old_to_new[static_cast<size_t>(i)] = static_cast<int>(out.kept.size());
      out.kept.push_back(i);
    }
  require(!out.kept.empty(), errc::invalid_argument, "restrict: all joints masked");

  out.topology.num_joints = static_cast<int>(out.kept.size());
  for (auto [a, b] : topo.edges)
    if (!masked[static_cast<size_t>(a)] && !masked[static_cast<size_t>(b)])
      out.topology.edges.emplace_back(out.old_to_new[static_cast<size_t>(a)],
                                      out.old_to_new[static_cast<size_t>(b)]);
  for (int old : out.kept) {
    const int partner = topo.flip_permutation[static_cast<size_t>(old)];
    const int mapped = masked[static_cast<size_t>(partner)]
                           ? out.old_to_new[static_cast<size_t>(old)]
                           : out.old_to_new[static_cast<size_t>(partner)];
    out.topology.flip_permutation.push_back(mapped);
    out.topology.part_assignment.push_back(topo.part_assignment[static_cast<size_t>(old)]);
  }
  return out;
}

// Physically remove the masked joints from the joint axis (never zero-fill).
inline SkeletonSequence apply_spatial_mask(const SkeletonSequence& seq,
                                           const std::vector<int>& masked_joints) {
  std::vector<bool> masked(static_cast<size_t>(seq.V), false);
  for (int j : masked_joints) {
    require(j >= 0 && j < seq.V, errc::invalid_argument, "spatial mask: joint out of range");
    masked[static_cast<size_t>(j)] = true;
  }
  std::vector<int> kept;
  for (int v = 0; v < seq.V; ++v)
    if (!masked[static_cast<size_t>(v)]) kept.push_back(v);
  require(!kept.empty(), errc::invalid_argument, "spatial mask: all joints masked");
  SkeletonSequence out(seq.C, seq.T, static_cast<int>(kept.size()));
  out.label = seq.label;
  out.subject = seq.subject;
  for (int c = 0; c < seq.C; ++c)
    for (int t = 0; t < seq.T; ++t)
      for (size_t k = 0; k < kept.size(); ++k)
        out.at(c, t, static_cast<int>(k)) = seq.at(c, t, kept[k]);
  return out;
}

// -------------------------------------------------------------------- MATM

struct MotionAttention {
  std::vector<double> weights;  // length T-1, sums to 1
  bool degenerate = false;      // static input fell back to uniform attention
};

// a_t = m_t^2 / sum_i m_i^2, where m_t^2 aggregates squared displacement over
// all channels and joints at transition t. A fully static sequence falls back
// to uniform attention and is flagged.
inline MotionAttention motion_attention(const SkeletonSequence& seq) {
  require(seq.T >= 2, errc::invalid_argument, "motion attention: need at least 2 frames");
  MotionAttention out;
  out.weights.assign(static_cast<size_t>(seq.T - 1), 0.0);
  double total = 0.0;
  for (int t = 0; t + 1 < seq.T; ++t) {
    double e = 0.0;
    for (int c = 0; c < seq.C; ++c)
      for (int v = 0; v < seq.V; ++v) {
        const double d = seq.at(c, t + 1, v) - seq.at(c, t, v);
        e += d * d;
      }
    out.weights[static_cast<size_t>(t)] = e;
    total += e;
  }
  if (total <= 0.0) {
    out.degenerate = true;
    const double u = 1.0 / static_cast<double>(seq.T - 1);
    for (auto& w : out.weights) w = u;
    return out;
  }
  for (auto& w : out.weights) w /= total;
  return out;
}

struct TemporalMaskPlan {
  std::vector<int> key_frames;     // top-K attention transitions, ascending
  std::vector<int> random_frames;  // K extra frames, disjoint from key_frames
  std::vector<double> attention;

  std::vector<int> masked_sorted() const {
    std::vector<int> all = key_frames;
    all.insert(all.end(), random_frames.begin(), random_frames.end());
    std::sort(all.begin(), all.end());
    return all;
  }
};

// key_frames are the K largest attention weights (ties broken toward the
// lower frame index); random_frames are K uniform draws without replacement
// from the remaining frame indices [0, T). At least two frames must survive.
inline TemporalMaskPlan sample_temporal_mask(const SkeletonSequence& seq, int top_k, Rng& rng) {
  require(top_k >= 0, errc::invalid_argument, "matm: K must be >= 0");
  require(2 * top_k <= seq.T - 2, errc::invalid_argument,
          "matm: 2K must leave at least 2 frames, got K=" + std::to_string(top_k) + " for T=" +
              std::to_string(seq.T));
  TemporalMaskPlan plan;
  auto attention = motion_attention(seq);
  plan.attention = attention.weights;
  if (top_k == 0) return plan;

  // stable ranking: sort by (weight desc, index asc)
  std::vector<int> order(plan.attention.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return plan.attention[static_cast<size_t>(a)] > plan.attention[static_cast<size_t>(b)];
  });
  plan.key_frames.assign(order.begin(), order.begin() + top_k);
  std::sort(plan.key_frames.begin(), plan.key_frames.end());

  std::vector<bool> taken(static_cast<size_t>(seq.T), false);
  for (int f : plan.key_frames) taken[static_cast<size_t>(f)] = true;
  std::vector<int> remaining;
  for (int t = 0; t < seq.T; ++t)
    if (!taken[static_cast<size_t>(t)]) remaining.push_back(t);
  for (int k = 0; k < top_k; ++k) {
    const int64_t pick = rng.uniform_int(static_cast<int64_t>(remaining.size()));
    plan.random_frames.push_back(remaining[static_cast<size_t>(pick)]);
    remaining.erase(remaining.begin() + pick);
  }
  std::sort(plan.random_frames.begin(), plan.random_frames.end());
  return plan;
}

// Remove the planned frames from the temporal axis, order preserved.
inline SkeletonSequence apply_temporal_mask(const SkeletonSequence& seq,
                                            const TemporalMaskPlan& plan) {
  std::vector<bool> drop(static_cast<size_t>(seq.T), false);
  for (int f : plan.masked_sorted()) {
    require(f >= 0 && f < seq.T, errc::invalid_argument, "temporal mask: frame out of range");
    drop[static_cast<size_t>(f)] = true;
  }
  std::vector<int> kept;
  for (int t = 0; t < seq.T; ++t)
    if (!drop[static_cast<size_t>(t)]) kept.push_back(t);
  require(!kept.empty(), errc::invalid_argument, "temporal mask: all frames masked");
  SkeletonSequence out(seq.C, static_cast<int>(kept.size()), seq.V);
  out.label = seq.label;
  out.subject = seq.subject;
  for (int c = 0; c < seq.C; ++c)
    for (size_t k = 0; k < kept.size(); ++k)
      for (int v = 0; v < seq.V; ++v)
        out.at(c, static_cast<int>(k), v) = seq.at(c, kept[k], v);
  return out;
}

}  // namespace pstl
