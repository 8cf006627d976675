#pragma once

// The four ordinary augmentations: shear, temporal crop, rotate, spatial
// flip, plus their fixed-order composition. All randomness flows through an
// explicit Rng with a pinned draw order so tests can replay the sampling.

#include <array>
#include <cmath>

#include "pstl/common.hpp"
#include "pstl/skeleton.hpp"

namespace pstl {

struct AugmentParams {
  double shear_amplitude = 1.0;        // beta
  double crop_pad_ratio = 1.0 / 6.0;   // gamma
  double rotate_main_max = 3.14159265358979323846 / 6.0;
  double rotate_minor_max = 3.14159265358979323846 / 180.0;
  double flip_probability = 0.5;
  bool spatial_transforms = true;      // disable to skip shear/rotate for non-coordinate channels

  void validate() const {
    require(shear_amplitude >= 0.0, errc::config, "augment: shear amplitude must be >= 0");
    require(crop_pad_ratio >= 0.0, errc::config, "augment: crop pad ratio must be >= 0");
    require(rotate_main_max >= 0.0 && rotate_minor_max >= 0.0, errc::config,
            "augment: rotation bounds must be >= 0");
    require(flip_probability >= 0.0 && flip_probability <= 1.0, errc::config,
            "augment: flip probability must lie in [0, 1]");
  }
};

using Mat3 = std::array<double, 9>;  // row-major 3x3

namespace detail {

inline void require_coords(const SkeletonSequence& seq, const char* op) {
  require(seq.C == 3, errc::invalid_argument,
          std::string(op) + ": invalid modality, needs 3 coordinate channels, got C=" +
              std::to_string(seq.C));
}

inline SkeletonSequence apply_matrix(const SkeletonSequence& seq, const Mat3& m) {
  SkeletonSequence out(seq.C, seq.T, seq.V);
  out.label = seq.label;
  out.subject = seq.subject;
  for (int t = 0; t < seq.T; ++t)
    for (int v = 0; v < seq.V; ++v) {
      const double x = seq.at(0, t, v), y = seq.at(1, t, v), z = seq.at(2, t, v);
      out.at(0, t, v) = m[0] * x + m[1] * y + m[2] * z;
      out.at(1, t, v) = m[3] * x + m[4] * y + m[5] * z;
      out.at(2, t, v) = m[6] * x + m[7] * y + m[8] * z;
    }
  return out;
}

inline Mat3 matmul3(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 3; ++j) r[static_cast<size_t>(i * 3 + j)] += a[static_cast<size_t>(i * 3 + k)] * b[static_cast<size_t>(k * 3 + j)];
  return r;
}

// np.pad-style reflection (edge frame not repeated).
inline int reflect_index(int i, int t_len) {
  if (t_len == 1) return 0;
  const int period = 2 * (t_len - 1);
  int k = ((i % period) + period) % period;
  return k < t_len ? k : period - k;
}

}  // namespace detail

// Unit diagonal, six off-diagonal factors drawn uniformly from
// [-beta, beta] in the order s12, s13, s21, s23, s31, s32.
inline Mat3 sample_shear_matrix(const AugmentParams& params, Rng& rng) {
  const double b = params.shear_amplitude;
  const double s12 = rng.uniform(-b, b), s13 = rng.uniform(-b, b);
  const double s21 = rng.uniform(-b, b), s23 = rng.uniform(-b, b);
  const double s31 = rng.uniform(-b, b), s32 = rng.uniform(-b, b);
  return {1.0, s12, s13, s21, 1.0, s23, s31, s32, 1.0};
}

inline SkeletonSequence shear(const SkeletonSequence& seq, const AugmentParams& params, Rng& rng) {
  detail::require_coords(seq, "shear");
  return detail::apply_matrix(seq, sample_shear_matrix(params, rng));
}

// Draw order: main axis index in {0,1,2}, then the X, Y, Z angles in that
// order (the main axis from [0, rotate_main_max], the others from
// [0, rotate_minor_max]). Composition is fixed as Rx * Ry * Rz.
inline Mat3 sample_rotation_matrix(const AugmentParams& params, Rng& rng) {
  const int main_axis = static_cast<int>(rng.uniform_int(3));
  double angle[3];
  for (int a = 0; a < 3; ++a)
    angle[a] = rng.uniform(0.0, a == main_axis ? params.rotate_main_max : params.rotate_minor_max);
  const double cx = std::cos(angle[0]), sx = std::sin(angle[0]);
  const double cy = std::cos(angle[1]), sy = std::sin(angle[1]);
  const double cz = std::cos(angle[2]), sz = std::sin(angle[2]);
  const Mat3 rx{1, 0, 0, 0, cx, -sx, 0, sx, cx};
  const Mat3 ry{cy, 0, sy, 0, 1, 0, -sy, 0, cy};
  const Mat3 rz{cz, -sz, 0, sz, cz, 0, 0, 0, 1};
  return detail::matmul3(rx, detail::matmul3(ry, rz));
}

inline SkeletonSequence rotate(const SkeletonSequence& seq, const AugmentParams& params, Rng& rng) {
  detail::require_coords(seq, "rotate");
  return detail::apply_matrix(seq, sample_rotation_matrix(params, rng));
}

// With probability p, permute the joint axis by the topology's left/right
// flip; otherwise identity. Consumes exactly one uniform draw.
inline SkeletonSequence spatial_flip(const SkeletonSequence& seq, const GraphTopology& topo,
                                     const AugmentParams& params, Rng& rng) {
  require(seq.V == topo.num_joints, errc::shape_mismatch,
          "spatial_flip: sequence joint count differs from topology");
  const bool do_flip = rng.uniform01() < params.flip_probability;
  if (!do_flip) return seq;
  SkeletonSequence out(seq.C, seq.T, seq.V);
  out.label = seq.label;
  out.subject = seq.subject;
  for (int c = 0; c < seq.C; ++c)
    for (int t = 0; t < seq.T; ++t)
      for (int v = 0; v < seq.V; ++v)
        out.at(c, t, v) = seq.at(c, t, topo.flip_permutation[static_cast<size_t>(v)]);
  return out;
}

// Pad ceil(gamma*T) frames by reflection (split low/high), then crop a
// uniformly random window of the original length.
inline SkeletonSequence temporal_crop(const SkeletonSequence& seq, const AugmentParams& params,
                                      Rng& rng) {
  require(seq.T >= 2, errc::invalid_argument, "temporal_crop: need at least 2 frames");
  const int pad = static_cast<int>(std::ceil(params.crop_pad_ratio * seq.T));
  const int left = pad / 2;
  const int start = static_cast<int>(rng.uniform_int(pad + 1));
  SkeletonSequence out(seq.C, seq.T, seq.V);
  out.label = seq.label;
  out.subject = seq.subject;
  for (int t = 0; t < seq.T; ++t) {
    const int src = detail::reflect_index(t + start - left, seq.T);
    for (int c = 0; c < seq.C; ++c)
      for (int v = 0; v < seq.V; ++v) out.at(c, t, v) = seq.at(c, src, v);
  }
  return out;
}

// Fixed composition: shear -> rotate -> flip -> crop. Shear and rotate are
// skipped when spatial_transforms is off (non-coordinate channel semantics).
inline SkeletonSequence ordinary_augment(const SkeletonSequence& seq, const GraphTopology& topo,
                                         const AugmentParams& params, Rng& rng) {
  params.validate();
  SkeletonSequence out = seq;
  if (params.spatial_transforms) {
    out = shear(out, params, rng);
    out = rotate(out, params, rng);
  }
  out = spatial_flip(out, topo, params, rng);
  out = temporal_crop(out, params, rng);
  return out;
}

}  // namespace pstl
