// SPDX-License-Identifier: Apache-2.0
#include "rose/camera.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rose/error.hpp"

namespace rose {

double Camera::focal() const { return 0.5 * static_cast<double>(width) / std::tan(0.5 * camera_angle_x); }

void Camera::validate() const {
  if (width < 1 || height < 1) {
    throw FormatError("camera resolution must be positive, got " + std::to_string(width) + "x" +
                      std::to_string(height));
  }
  if (!(camera_angle_x > 0.0 && camera_angle_x < std::numbers::pi)) {
    throw FormatError("camera_angle_x must lie in (0, pi), got " + std::to_string(camera_angle_x));
  }
  const Eigen::Matrix3d r = c2w.block<3, 3>(0, 0);
  const double err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(err <= 1e-6)) {
    throw FormatError("camera rotation is not orthonormal (max deviation " + std::to_string(err) + ")");
  }
  if (!c2w.allFinite()) throw FormatError("camera transform contains non-finite values");
}

std::vector<double> RayBundle::sample_points() const {
  std::vector<double> pts(num_rays * num_samples * 3);
  for (std::size_t r = 0; r < num_rays; ++r) {
    for (std::size_t s = 0; s < num_samples; ++s) {
      const double t = t_vals[r * num_samples + s];
      for (int c = 0; c < 3; ++c) pts[(r * num_samples + s) * 3 + c] = origins[r * 3 + c] + t * dirs[r * 3 + c];
    }
  }
  return pts;
}

std::vector<double> RayBundle::sample_dirs() const {
  std::vector<double> out(num_rays * num_samples * 3);
  for (std::size_t r = 0; r < num_rays; ++r) {
    for (std::size_t s = 0; s < num_samples; ++s) {
      std::copy_n(dirs.begin() + static_cast<std::ptrdiff_t>(r * 3), 3,
                  out.begin() + static_cast<std::ptrdiff_t>((r * num_samples + s) * 3));
    }
  }
  return out;
}

RayBundle rays_for_pixels(const Camera& camera, std::span<const std::size_t> pixel_ids, double near, double far) {
  const std::size_t count = camera.pixel_count();
  const double f = camera.focal();
  const Eigen::Matrix3d rot = camera.c2w.block<3, 3>(0, 0);
  const Eigen::Vector3d origin = camera.position();
  RayBundle bundle;
  bundle.num_rays = pixel_ids.size();
  bundle.near = near;
  bundle.far = far;
  bundle.origins.resize(pixel_ids.size() * 3);
  bundle.dirs.resize(pixel_ids.size() * 3);
  for (std::size_t i = 0; i < pixel_ids.size(); ++i) {
    const std::size_t id = pixel_ids[i];
    if (id >= count) {
      throw Error("pixel index " + std::to_string(id) + " out of range for " + std::to_string(camera.width) + "x" +
                  std::to_string(camera.height) + " camera");
    }
    const double u = static_cast<double>(id % static_cast<std::size_t>(camera.width)) + 0.5;
    const double v = static_cast<double>(id / static_cast<std::size_t>(camera.width)) + 0.5;
    const Eigen::Vector3d local((u - 0.5 * camera.width) / f, -(v - 0.5 * camera.height) / f, -1.0);
    const Eigen::Vector3d dir = (rot * local).normalized();
    for (int c = 0; c < 3; ++c) {
      bundle.origins[i * 3 + c] = origin[c];
      bundle.dirs[i * 3 + c] = dir[c];
    }
  }
  return bundle;
}

void update_deltas(RayBundle& bundle) {
  const std::size_t n = bundle.num_samples;
  bundle.deltas.assign(bundle.num_rays * n, kTerminalDelta);
  for (std::size_t r = 0; r < bundle.num_rays; ++r) {
    for (std::size_t s = 0; s + 1 < n; ++s) {
      bundle.deltas[r * n + s] = bundle.t_vals[r * n + s + 1] - bundle.t_vals[r * n + s];
    }
  }
}

RayBundle stratified_samples(const RayBundle& bundle, std::size_t n, Rng* rng, bool perturb) {
  if (n < 1) throw Error("stratified_samples: need at least one sample per ray");
  if (!(bundle.far > bundle.near)) {
    throw Error("stratified_samples: far (" + std::to_string(bundle.far) + ") must exceed near (" +
                std::to_string(bundle.near) + ")");
  }
  if (perturb && rng == nullptr) throw Error("stratified_samples: perturbation requires a generator");
  RayBundle out = bundle;
  out.num_samples = n;
  out.t_vals.resize(bundle.num_rays * n);
  const double width = (bundle.far - bundle.near) / static_cast<double>(n);
  for (std::size_t r = 0; r < bundle.num_rays; ++r) {
    for (std::size_t s = 0; s < n; ++s) {
      const double lo = bundle.near + width * static_cast<double>(s);
      const double frac = perturb ? rng->uniform() : 0.5;
      out.t_vals[r * n + s] = lo + width * frac;
    }
  }
  update_deltas(out);
  return out;
}

RayBundle hierarchical_samples(const RayBundle& coarse, std::span<const double> coarse_weights, std::size_t n_fine,
                               Rng* rng) {
  const std::size_t nc = coarse.num_samples;
  if (coarse_weights.size() != coarse.num_rays * nc) {
    throw ShapeError("hierarchical_samples: expected " + std::to_string(coarse.num_rays * nc) + " weights, got " +
                     std::to_string(coarse_weights.size()));
  }
  const std::size_t total = nc + n_fine;
  RayBundle out = coarse;
  out.num_samples = total;
  out.t_vals.resize(coarse.num_rays * total);

  std::vector<double> edges(nc + 1);
  std::vector<double> cdf(nc + 1);
  std::vector<double> merged(total);
  for (std::size_t r = 0; r < coarse.num_rays; ++r) {
    const double* t = coarse.t_vals.data() + r * nc;
    const double* w = coarse_weights.data() + r * nc;
    edges[0] = coarse.near;
    edges[nc] = coarse.far;
    for (std::size_t s = 1; s < nc; ++s) edges[s] = std::clamp(0.5 * (t[s - 1] + t[s]), coarse.near, coarse.far);

    double total_w = 0.0;
    for (std::size_t s = 0; s < nc; ++s) {
      if (w[s] < 0.0) throw DomainError("hierarchical_samples: negative coarse weight");
      total_w += w[s];
    }
    const bool uniform = !(total_w > 1e-12);
    // With a uniform pdf the mass of a bin is proportional to its length.
    const double denom = uniform ? (coarse.far - coarse.near) : total_w;
    cdf[0] = 0.0;
    for (std::size_t s = 0; s < nc; ++s) {
      const double mass = uniform ? (edges[s + 1] - edges[s]) : w[s];
      cdf[s + 1] = cdf[s] + mass / denom;
    }
    cdf[nc] = 1.0;

    std::copy_n(t, nc, merged.begin());
    for (std::size_t j = 0; j < n_fine; ++j) {
      const double u = rng ? rng->uniform() : (static_cast<double>(j) + 0.5) / static_cast<double>(n_fine);
      // First bin whose upper CDF value exceeds u; zero-mass bins are skipped.
      auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), u);
      std::size_t bin = static_cast<std::size_t>(it - cdf.begin()) - 1;
      bin = std::min(bin, nc - 1);
      const double span = cdf[bin + 1] - cdf[bin];
      const double frac = span > 0.0 ? (u - cdf[bin]) / span : 0.5;
      merged[nc + j] = std::clamp(edges[bin] + frac * (edges[bin + 1] - edges[bin]), coarse.near, coarse.far);
    }
    std::sort(merged.begin(), merged.end());
    for (std::size_t s = 1; s < total; ++s) {
      if (merged[s] <= merged[s - 1]) merged[s] = std::nextafter(merged[s - 1], coarse.far + 1.0);
    }
    std::copy(merged.begin(), merged.end(), out.t_vals.begin() + static_cast<std::ptrdiff_t>(r * total));
  }
  update_deltas(out);
  return out;
}

}  // namespace rose
