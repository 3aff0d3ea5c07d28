// SPDX-License-Identifier: Apache-2.0
//
// Optimization loop, configuration presets and checkpoint persistence.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "rose/autodiff/optim.hpp"
#include "rose/field.hpp"
#include "rose/losses.hpp"
#include "rose/random.hpp"
#include "rose/render.hpp"
#include "rose/scene_io.hpp"

namespace rose::train {

namespace fs = std::filesystem;

struct TrainConfig {
  std::size_t batch_rays = 1024;
  std::uint64_t n_iters = 8000;
  render::SamplingConfig sampling{32, 64, false};
  double lr = 5e-4;
  std::uint64_t cosine_period = 2500;
  double cosine_floor = 0.0;
  bool cosine_cyclic = true;
  losses::LossConfig loss;
  field::FieldConfig field;
  std::uint64_t seed = 0;
  double tv_weight = 0.0;  // along-ray illuminance smoothness (ablation only)
  bool coarse_loss = true;  // reconstruction loss on the coarse network too
  // Start the illuminance heads at mean(target) / e_target instead of
  // softplus(0). Applied once, before the first iteration.
  bool illum_init = true;
  std::uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::uint64_t val_every = 0;         // 0: no validation snapshots
  std::size_t chunk = 4096;            // rays per rendering chunk
  unsigned threads = 1;                // rendering threads; training is serial

  /// "desk", "paper" or "ci".
  static TrainConfig preset(const std::string& name);

  /// Sets one key from its textual value; throws ConfigError on unknown
  /// keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Applies `key = value` lines ('#' starts a comment).
  void apply_text(const std::string& text);
  /// Every key with its current value.
  std::map<std::string, std::string> to_map() const;
  /// Sorted `key = value` lines, readable back by apply_text.
  std::string dump() const;
  ad::CosineSchedule schedule() const;
  void validate() const;
};

TrainConfig load_config_file(const fs::path& path, TrainConfig base);

/// Scene information a checkpoint needs to render without the dataset.
struct SceneMeta {
  double camera_angle_x = 0.0;
  int width = 0;
  int height = 0;
  double near = 0.0;
  double far = 0.0;
  std::array<double, 3> orbit_center{0.0, 0.0, 0.0};
  double orbit_radius = 1.0;
  double orbit_elevation = 0.5;  // radians

  static SceneMeta from_dataset(const io::SceneDataset& dataset);
};

/// Everything needed to resume or render: config, both fields, optimizer
/// and generator state.
struct TrainerState {
  TrainConfig config;
  SceneMeta meta;
  field::RoseField coarse;
  field::RoseField fine;
  ad::AdamState adam;
  Rng rng;
  std::uint64_t iteration = 0;  // completed iterations

  /// Fresh, randomly initialized state.
  static TrainerState initialize(const TrainConfig& config, const SceneMeta& meta);
  ad::ParameterList parameters() const;
};

inline constexpr char kCheckpointMagic[8] = {'R', 'O', 'S', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const fs::path& path, const TrainerState& state);
/// Throws FormatError on wrong magic, unsupported version or truncation.
TrainerState load_checkpoint(const fs::path& path);

struct IterationLog {
  std::uint64_t iteration = 0;
  double lr = 0.0;
  double mse = 0.0;
  double ic = 0.0;
  double total = 0.0;
};

struct TrainOptions {
  fs::path out_dir;  // loss.csv, checkpoints, val/; empty disables all output
  std::function<void(const IterationLog&)> on_iteration;
};

/// Runs iterations until state.iteration == config.n_iters, resuming from
/// whatever iteration the state holds. Throws TrainingError on a
/// non-finite loss.
void train(const io::SceneDataset& dataset, TrainerState& state, const TrainOptions& options);

/// Convenience: initialize and train from scratch.
TrainerState train(const io::SceneDataset& dataset, const TrainConfig& config, const TrainOptions& options);

/// Deterministic full-frame render of the trained fine network.
render::RenderedImage render_view(const TrainerState& state, const Camera& camera);

/// Camera on the orbit stored in the scene meta.
Camera orbit_camera(const SceneMeta& meta, int index, int count);

}  // namespace rose::train
