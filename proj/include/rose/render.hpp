// SPDX-License-Identifier: Apache-2.0
//
// Volume rendering of the normal-light color and the illuminance transition
// with shared weights, composed into the low-light reconstruction.
#pragma once

#include <cstddef>

#include "rose/autodiff/tensor.hpp"
#include "rose/camera.hpp"
#include "rose/field.hpp"
#include "rose/image.hpp"

namespace rose::render {

using ad::Tensor;

struct RenderedRays {
  Tensor c_nor;    // [B, 3]
  Tensor i_trans;  // [B]
  Tensor c_low;    // [B, 3], c_nor * i_trans
  Tensor acc;      // [B]
  Tensor weights;  // [B, N], T_n (1 - exp(-sigma_n delta_n))
};

/// `samples` holds B*N points ordered ray-major, aligned with bundle.t_vals.
/// Throws DomainError on negative density or spacing.
RenderedRays render_rays(const field::FieldSample& samples, const RayBundle& bundle, bool white_background = false);

struct SamplingConfig {
  std::size_t n_coarse = 64;
  std::size_t n_fine = 128;
  bool white_background = false;
};

struct PipelineOutput {
  RenderedRays coarse;
  RenderedRays fine;
  field::FieldSample fine_samples;
  RayBundle fine_bundle;
};

/// Coarse pass on stratified depths, then a fine pass on the merged
/// coarse + importance-sampled depths. With rng == nullptr sampling is
/// deterministic (bin midpoints and evenly spaced CDF quantiles).
PipelineOutput render_pipeline(const field::RoseField& coarse, const field::RoseField& fine, const RayBundle& rays,
                               const SamplingConfig& sampling, Rng* rng);

/// Full-frame outputs of the fine network.
struct RenderedImage {
  Image normal;  // H x W x 3
  Image illum;   // H x W x 1
  Image low;     // H x W x 3
  Image acc;     // H x W x 1
};

/// Renders every pixel in chunks of `chunk` rays, optionally on several
/// threads. Results do not depend on chunk size or thread count.
RenderedImage render_image(const field::RoseField& coarse, const field::RoseField& fine, const Camera& camera,
                           double near, double far, const SamplingConfig& sampling, std::size_t chunk,
                           unsigned threads = 1);

}  // namespace rose::render
