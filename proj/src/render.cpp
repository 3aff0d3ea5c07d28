// SPDX-License-Identifier: Apache-2.0
#include "rose/render.hpp"

#include <algorithm>
#include <new>
#include <numeric>
#include <thread>

#include "rose/autodiff/ops.hpp"
#include "rose/error.hpp"

namespace rose::render {

namespace {

Tensor points_tensor(std::vector<double> values) {
  const std::size_t rows = values.size() / 3;
  return Tensor::from_data({rows, 3}, std::move(values));
}

}  // namespace

RenderedRays render_rays(const field::FieldSample& samples, const RayBundle& bundle, bool white_background) {
  const std::size_t b = bundle.num_rays;
  const std::size_t n = bundle.num_samples;
  if (samples.sigma.size() != b * n || samples.illum.size() != b * n || samples.color.size() != b * n * 3) {
    throw ShapeError("render_rays: field samples do not match a bundle of " + std::to_string(b) + " rays x " +
                     std::to_string(n) + " samples");
  }
  for (double s : samples.sigma.data()) {
    if (!(s >= 0.0)) throw DomainError("render_rays: negative or NaN density");
  }
  for (double d : bundle.deltas) {
    if (!(d >= 0.0)) throw DomainError("render_rays: negative or NaN sample spacing");
  }
  const Tensor sigma = ad::reshape(samples.sigma, {b, n});
  const Tensor deltas = Tensor::from_data({b, n}, bundle.deltas);
  const Tensor tau = ad::mul(sigma, deltas);
  const Tensor alpha = ad::add_scalar(ad::neg(ad::exp(ad::neg(tau))), 1.0);
  const Tensor transmittance = ad::exp(ad::neg(ad::exclusive_cumsum(tau)));

  RenderedRays out;
  out.weights = ad::mul(transmittance, alpha);
  const Tensor w3 = ad::reshape(out.weights, {b, n, 1});
  out.c_nor = ad::sum_axis(ad::mul(w3, ad::reshape(samples.color, {b, n, 3})), 1);
  out.i_trans = ad::sum_axis(ad::mul(out.weights, ad::reshape(samples.illum, {b, n})), 1);
  out.acc = ad::sum_axis(out.weights, 1);
  if (white_background) {
    out.c_nor = ad::add(out.c_nor, ad::reshape(ad::add_scalar(ad::neg(out.acc), 1.0), {b, 1}));
  }
  out.c_low = ad::mul(out.c_nor, ad::reshape(out.i_trans, {b, 1}));
  return out;
}

PipelineOutput render_pipeline(const field::RoseField& coarse, const field::RoseField& fine, const RayBundle& rays,
                               const SamplingConfig& sampling, Rng* rng) {
  PipelineOutput out;
  const RayBundle coarse_bundle = stratified_samples(rays, sampling.n_coarse, rng, rng != nullptr);
  const auto coarse_samples = coarse.forward(points_tensor(coarse_bundle.sample_points()),
                                             points_tensor(coarse_bundle.sample_dirs()));
  out.coarse = render_rays(coarse_samples, coarse_bundle, sampling.white_background);

  const auto w = out.coarse.weights.data();
  out.fine_bundle = hierarchical_samples(coarse_bundle, w, sampling.n_fine, rng);
  out.fine_samples =
      fine.forward(points_tensor(out.fine_bundle.sample_points()), points_tensor(out.fine_bundle.sample_dirs()));
  out.fine = render_rays(out.fine_samples, out.fine_bundle, sampling.white_background);
  return out;
}

namespace {

void render_range(const field::RoseField& coarse, const field::RoseField& fine, const Camera& camera, double near,
                  double far, const SamplingConfig& sampling, std::size_t begin, std::size_t end,
                  RenderedImage& out) {
  ad::NoGradGuard no_grad;
  std::vector<std::size_t> ids(end - begin);
  std::iota(ids.begin(), ids.end(), begin);
  const RayBundle rays = rays_for_pixels(camera, ids, near, far);
  const PipelineOutput result = render_pipeline(coarse, fine, rays, sampling, nullptr);
  const auto c_nor = result.fine.c_nor.data();
  const auto c_low = result.fine.c_low.data();
  const auto illum = result.fine.i_trans.data();
  const auto acc = result.fine.acc.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t px = ids[i];
    for (int c = 0; c < 3; ++c) {
      out.normal.pixels[px * 3 + c] = c_nor[i * 3 + c];
      out.low.pixels[px * 3 + c] = c_low[i * 3 + c];
    }
    out.illum.pixels[px] = illum[i];
    out.acc.pixels[px] = acc[i];
  }
}

}  // namespace

RenderedImage render_image(const field::RoseField& coarse, const field::RoseField& fine, const Camera& camera,
                           double near, double far, const SamplingConfig& sampling, std::size_t chunk,
                           unsigned threads) {
  RenderedImage out{Image(camera.width, camera.height, 3), Image(camera.width, camera.height, 1),
                    Image(camera.width, camera.height, 3), Image(camera.width, camera.height, 1)};
  const std::size_t total = camera.pixel_count();
  chunk = std::max<std::size_t>(chunk, 1);
  threads = std::max(threads, 1U);

  // Falls back to smaller chunks if a chunk does not fit in memory.
  auto run_chunks = [&](std::size_t first_chunk, std::size_t stride) {
    std::size_t size = chunk;
    for (std::size_t begin = first_chunk * chunk; begin < total; begin += stride * chunk) {
      const std::size_t end = std::min(total, begin + chunk);
      for (std::size_t sub = begin; sub < end;) {
        const std::size_t sub_end = std::min(end, sub + size);
        try {
          render_range(coarse, fine, camera, near, far, sampling, sub, sub_end, out);
          sub = sub_end;
        } catch (const std::bad_alloc&) {
          if (size == 1) throw;
          size = std::max<std::size_t>(size / 2, 1);
        }
      }
    }
  };

  if (threads == 1) {
    run_chunks(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          run_chunks(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return out;
}

}  // namespace rose::render
