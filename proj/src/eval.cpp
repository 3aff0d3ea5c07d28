// SPDX-License-Identifier: Apache-2.0
#include "rose/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rose/error.hpp"
#include "rose/metrics.hpp"
#include "rose/trainer.hpp"

namespace rose::eval {

using nlohmann::json;

namespace {

// Piecewise-linear colormap control points, evenly spaced over [0, 1].
constexpr std::array<std::array<double, 3>, 5> kColormap{{
    {0.05, 0.03, 0.25},
    {0.30, 0.10, 0.55},
    {0.75, 0.20, 0.40},
    {0.98, 0.55, 0.15},
    {0.99, 0.95, 0.45},
}};

constexpr double kOpaque = 0.5;

json number_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

json view_to_json(const ViewMetrics& v) {
  json j{{"name", v.name},
         {"psnr", number_or_inf(v.psnr)},
         {"ssim", v.ssim},
         {"mean_intensity", v.mean_intensity},
         {"mean_illum", v.mean_illum}};
  if (v.illum_mae) j["illum_mae"] = *v.illum_mae;
  if (!v.images.empty()) j["images"] = v.images;
  return j;
}

}  // namespace

Image illum_heatmap(const Image& illum) {
  if (illum.channels != 1) throw ShapeError("illum_heatmap expects a single-channel image");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : illum.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Image out(illum.width, illum.height, 3);
  const double range = hi - lo;
  const double segments = static_cast<double>(kColormap.size() - 1);
  for (std::size_t p = 0; p < illum.pixels.size(); ++p) {
    const double t = range > 0.0 ? (illum.pixels[p] - lo) / range : 0.0;
    const double x = std::clamp(t, 0.0, 1.0) * segments;
    const std::size_t i = std::min(static_cast<std::size_t>(x), kColormap.size() - 2);
    const double f = x - static_cast<double>(i);
    for (int c = 0; c < 3; ++c) out.pixels[p * 3 + c] = (1.0 - f) * kColormap[i][c] + f * kColormap[i + 1][c];
  }
  return out;
}

void write_view_outputs(const fs::path& dir, const std::string& stem, const render::RenderedImage& rendered) {
  io::save_png(dir / (stem + "_normal.png"), rendered.normal);
  io::save_png(dir / (stem + "_low.png"), rendered.low);
  io::save_png(dir / (stem + "_illum.png"), illum_heatmap(rendered.illum));
}

std::string EvalReport::to_json() const {
  json j;
  j["views"] = json::array();
  for (const auto& v : views) j["views"].push_back(view_to_json(v));
  json m = view_to_json(mean);
  m.erase("name");
  j["mean"] = m;
  json cfg = json::object();
  std::istringstream in(config_dump);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["config"] = cfg;
  j["notes"] = "LPIPS is not computed (it needs pretrained perceptual weights).";
  return j.dump(2);
}

EvalReport eval_scene(const train::TrainerState& state, const io::SceneDataset& dataset, const fs::path& out,
                      io::Split split) {
  const auto ids = dataset.indices(split);
  if (ids.empty()) throw FormatError("dataset has no " + io::to_string(split) + " views to evaluate");
  for (auto id : ids) {
    if (id >= dataset.images_nor.size() || !dataset.images_nor[id]) {
      throw FormatError("view '" + dataset.frames[id].file_path + "' has no normal-light ground truth");
    }
  }

  EvalReport report;
  report.config_dump = state.config.dump();
  double illum_mae_sum = 0.0;
  std::size_t illum_mae_views = 0;
  for (auto id : ids) {
    const auto& frame = dataset.frames[id];
    const auto rendered = train::render_view(state, frame.camera);
    ViewMetrics v;
    v.name = fs::path(frame.file_path).stem().string();
    v.psnr = metrics::psnr(rendered.normal, *dataset.images_nor[id]);
    v.ssim = metrics::ssim(rendered.normal, *dataset.images_nor[id]);
    v.mean_intensity = metrics::mean_intensity(rendered.normal);

    double illum_sum = 0.0;
    double err_sum = 0.0;
    std::size_t opaque = 0;
    const bool has_gt = id < dataset.illum_gt.size() && dataset.illum_gt[id].has_value();
    for (std::size_t p = 0; p < rendered.acc.pixels.size(); ++p) {
      if (rendered.acc.pixels[p] <= kOpaque) continue;
      ++opaque;
      illum_sum += rendered.illum.pixels[p];
      if (has_gt) err_sum += std::abs(rendered.illum.pixels[p] - dataset.illum_gt[id]->pixels[p]);
    }
    v.mean_illum = opaque > 0 ? illum_sum / static_cast<double>(opaque) : 0.0;
    if (has_gt && opaque > 0) {
      v.illum_mae = err_sum / static_cast<double>(opaque);
      illum_mae_sum += *v.illum_mae;
      ++illum_mae_views;
    }
    if (!out.empty()) {
      write_view_outputs(out, v.name, rendered);
      v.images = {v.name + "_normal.png", v.name + "_low.png", v.name + "_illum.png"};
    }
    report.views.push_back(std::move(v));
  }

  const double n = static_cast<double>(report.views.size());
  report.mean.name = "mean";
  for (const auto& v : report.views) {
    report.mean.psnr += v.psnr / n;
    report.mean.ssim += v.ssim / n;
    report.mean.mean_intensity += v.mean_intensity / n;
    report.mean.mean_illum += v.mean_illum / n;
  }
  if (illum_mae_views > 0) report.mean.illum_mae = illum_mae_sum / static_cast<double>(illum_mae_views);

  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream f(out / "report.json");
    if (!f) throw IoError("cannot write " + (out / "report.json").string());
    f << report.to_json() << '\n';
  }
  return report;
}

}  // namespace rose::eval
