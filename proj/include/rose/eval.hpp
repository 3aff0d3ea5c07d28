// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rose/image.hpp"
#include "rose/render.hpp"
#include "rose/scene_io.hpp"

namespace rose::train {
struct TrainerState;
}

namespace rose::eval {

namespace fs = std::filesystem;

/// Min-max normalized single-channel image mapped through a fixed
/// dark-blue to yellow colormap. Constant images map to the low end.
Image illum_heatmap(const Image& illum);

/// Writes <stem>_normal.png, <stem>_low.png and <stem>_illum.png into dir.
void write_view_outputs(const fs::path& dir, const std::string& stem, const render::RenderedImage& rendered);

struct ViewMetrics {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  double mean_intensity = 0.0;       // of the rendered normal-light image
  double mean_illum = 0.0;           // rendered I over pixels with acc > 0.5
  std::optional<double> illum_mae;   // |I - I_gt| over pixels with acc > 0.5
  std::vector<std::string> images;
};

struct EvalReport {
  std::vector<ViewMetrics> views;
  ViewMetrics mean;
  std::string config_dump;

  std::string to_json() const;
};

/// Renders every test view, compares against normal-light ground truth and
/// writes report.json plus per-view PNGs to `out` (skipped when empty).
/// Throws FormatError on an empty test split or missing ground truth.
EvalReport eval_scene(const train::TrainerState& state, const io::SceneDataset& dataset, const fs::path& out,
                      io::Split split = io::Split::kTest);

}  // namespace rose::eval
