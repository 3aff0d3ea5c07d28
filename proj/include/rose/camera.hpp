// SPDX-License-Identifier: Apache-2.0
//
// Pinhole cameras, ray generation and sample placement along rays.
#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

#include "rose/random.hpp"

namespace rose {

/// Spacing assigned to the last sample of every ray.
inline constexpr double kTerminalDelta = 1e10;

/// Pinhole camera with OpenGL axes: x right, y up, looking down -z.
struct Camera {
  int width = 0;
  int height = 0;
  double camera_angle_x = 0.0;  // horizontal field of view, radians
  Eigen::Matrix4d c2w = Eigen::Matrix4d::Identity();

  double focal() const;
  Eigen::Vector3d position() const { return c2w.block<3, 1>(0, 3); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }

  /// Throws FormatError if the image size is empty, the fov is not in
  /// (0, pi) or the rotation block is not orthonormal within 1e-6.
  void validate() const;
};

/// A batch of rays with optional per-ray sample depths. Arrays are
/// row-major: origins/dirs are num_rays x 3, t_vals/deltas are
/// num_rays x num_samples.
struct RayBundle {
  std::size_t num_rays = 0;
  std::size_t num_samples = 0;
  std::vector<double> origins;
  std::vector<double> dirs;
  std::vector<double> t_vals;
  std::vector<double> deltas;
  double near = 0.0;
  double far = 0.0;

  /// Sample positions o + t d, (num_rays * num_samples) x 3.
  std::vector<double> sample_points() const;
  /// Ray direction repeated for each sample, (num_rays * num_samples) x 3.
  std::vector<double> sample_dirs() const;
};

RayBundle rays_for_pixels(const Camera& camera, std::span<const std::size_t> pixel_ids, double near, double far);

/// Places n samples per ray in equal bins over [near, far]: bin midpoints,
/// or one uniform draw per bin when `perturb` is set.
RayBundle stratified_samples(const RayBundle& bundle, std::size_t n, Rng* rng, bool perturb);

/// Draws n_fine depths per ray by inverting the piecewise-constant CDF of
/// the coarse weights and merges them with the coarse depths. Bin n spans
/// the midpoints around coarse sample n, clipped to [near, far]. Rays whose
/// weights sum to zero use a uniform pdf. With rng == nullptr the CDF is
/// inverted at evenly spaced quantiles (deterministic rendering).
RayBundle hierarchical_samples(const RayBundle& coarse, std::span<const double> coarse_weights, std::size_t n_fine,
                               Rng* rng);

/// Recomputes deltas from t_vals (terminal delta for the last sample).
void update_deltas(RayBundle& bundle);

}  // namespace rose
