// SPDX-License-Identifier: Apache-2.0
//
// Posed multiview datasets on disk, PNG encoding, and the synthetic scene
// generator that produces low-light / normal-light / illuminance triplets.
//
// Dataset layout:
//   poses.json       camera_angle_x, near, far,
//                    frames[{file_path, transform_matrix (4 rows), split}]
//   images/low/*.png observed low-light frames
//   images/nor/*.png normal-light ground truth (optional)
//   illum/*.png      per-pixel illuminance transition ground truth (optional)
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rose/camera.hpp"
#include "rose/image.hpp"

namespace rose::io {

namespace fs = std::filesystem;

/// Round-half-up 8-bit quantization of a value clamped to [0, 1].
std::uint8_t quantize(double value);
double dequantize(std::uint8_t byte);

/// Writes an 8-bit RGB PNG; single-channel images are replicated to RGB.
void save_png(const fs::path& path, const Image& image);
/// Reads any PNG as 3-channel RGB in [0, 1].
Image load_png(const fs::path& path);

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split split);
Split parse_split(const std::string& text);

struct Frame {
  std::string file_path;  // relative to the dataset root
  Split split = Split::kTrain;
  Camera camera;
};

struct SceneDataset {
  double camera_angle_x = 0.0;
  double near = 0.0;
  double far = 0.0;
  std::vector<Frame> frames;
  std::vector<Image> images_low;
  std::vector<std::optional<Image>> images_nor;
  std::vector<std::optional<Image>> illum_gt;  // single channel

  std::vector<std::size_t> indices(Split split) const;
  int width() const { return images_low.empty() ? 0 : images_low.front().width; }
  int height() const { return images_low.empty() ? 0 : images_low.front().height; }
};

/// Throws IoError on missing files and FormatError on inconsistent
/// contents (unreferenced or missing frames, resolution mismatch,
/// non-orthonormal rotations, bad bounds).
SceneDataset load_dataset(const fs::path& dir);
void write_dataset(const SceneDataset& dataset, const fs::path& dir);
/// Reads only the cameras of a poses.json (no images). Resolution comes
/// from optional top-level "w"/"h" keys, else the given defaults.
SceneDataset load_poses(const fs::path& poses_json, int default_width, int default_height);

// --- synthetic scenes -------------------------------------------------------

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5);
};

struct Box {
  Eigen::Vector3d min = Eigen::Vector3d::Constant(-0.5);
  Eigen::Vector3d max = Eigen::Vector3d::Constant(0.5);
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5);
};

/// Illuminance transition I(x) = L_low / L_nor, in (0, 1].
struct IllumTransition {
  enum class Kind { kConstant, kRamp };
  Kind kind = Kind::kConstant;
  double value = 0.2;  // constant level
  // Ramp: linear from v0 at coord[axis] = x0 to v1 at x1, held outside.
  int axis = 0;
  double x0 = -1.0;
  double x1 = 1.0;
  double v0 = 0.1;
  double v1 = 0.4;

  double at(const Eigen::Vector3d& p) const;
};

struct SyntheticSpec {
  std::vector<Sphere> spheres;
  std::vector<Box> boxes;
  Eigen::Vector3d light_dir = Eigen::Vector3d(0.4, 1.0, 0.3);
  double ambient = 0.35;
  // Normal-light level L_nor. When normal_mean > 0 it is instead chosen so
  // that the mean normal-light pixel over all views equals normal_mean.
  double illum_nor = 1.0;
  double normal_mean = 0.45;
  IllumTransition transition;
  double noise_sigma = 0.0;
  int n_views = 16;
  int width = 64;
  int height = 64;
  std::uint64_t seed = 0;
  double camera_angle_x = 0.7;
  double orbit_radius = 3.2;
  std::vector<double> elevations_deg{55.0, 68.0};  // alternate across views
  Eigen::Vector3d look_at = Eigen::Vector3d(0.0, 0.25, 0.0);
  double near = 1.5;
  double far = 5.5;
  std::vector<int> test_views{2, 7, 12};
  std::vector<int> val_views{10};

  void validate() const;
};

/// Named presets: "constant02" (I = 0.2) and "ramp" (I ramps along x).
SyntheticSpec synthetic_preset(const std::string& name);
std::vector<std::string> synthetic_preset_names();

SyntheticSpec spec_from_json(const std::string& text);
std::string spec_to_json(const SyntheticSpec& spec);

/// Camera for view `index` of the spec's orbit.
Camera synthetic_camera(const SyntheticSpec& spec, int index);

struct SurfaceHit {
  double t = 0.0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  Eigen::Vector3d albedo = Eigen::Vector3d::Zero();
};

/// Nearest intersection of the ray with the spec's primitives, if any.
std::optional<SurfaceHit> trace(const SyntheticSpec& spec, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir);

/// Ray-traces every view and writes the dataset to `out` (skipped when
/// `out` is empty). The returned images are the values before 8-bit
/// quantization; rays that miss all primitives are black with I = 0.
SceneDataset generate_synthetic(const SyntheticSpec& spec, const fs::path& out);

}  // namespace rose::io
