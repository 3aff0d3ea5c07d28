// SPDX-License-Identifier: Apache-2.0
#include "rose/trainer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rose/autodiff/ops.hpp"
#include "rose/error.hpp"
#include "rose/eval.hpp"

namespace rose::train {

using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (!v.empty() && v.find_first_not_of("0123456789") == std::string::npos) {
    try {
      return std::stoull(v);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

}  // namespace

TrainConfig TrainConfig::preset(const std::string& name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name == "paper") {
    c.n_iters = 75000;
    c.sampling.n_coarse = 64;
    c.sampling.n_fine = 128;
    c.field.width = 256;
    return c;
  }
  if (name == "ci") {
    c.batch_rays = 256;
    c.n_iters = 1500;
    c.sampling.n_coarse = 16;
    c.sampling.n_fine = 32;
    c.field.width = 64;
    c.field.depth = 4;
    c.field.skip = 0;
    c.field.n_freq_pos = 6;
    c.field.n_freq_dir = 2;
    c.field.lrd_rank = 16;
    c.field.lrd_filters = 32;
    c.lr = 2e-3;
    c.cosine_period = 1500;
    c.cosine_floor = 1e-4;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk, paper or ci)");
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "batch_rays") batch_rays = parse_uint(key, v);
  else if (key == "n_iters") n_iters = parse_uint(key, v);
  else if (key == "n_coarse") sampling.n_coarse = parse_uint(key, v);
  else if (key == "n_fine") sampling.n_fine = parse_uint(key, v);
  else if (key == "white_background") sampling.white_background = parse_bool(key, v);
  else if (key == "lr") lr = parse_double(key, v);
  else if (key == "cosine_period") cosine_period = parse_uint(key, v);
  else if (key == "cosine_floor") cosine_floor = parse_double(key, v);
  else if (key == "cosine_cyclic") cosine_cyclic = parse_bool(key, v);
  else if (key == "e_target") loss.e_target = parse_double(key, v);
  else if (key == "lambda_ic") loss.lambda_ic = parse_double(key, v);
  else if (key == "eps_tone") loss.eps_tone = parse_double(key, v);
  else if (key == "tone_clamp") loss.tone_clamp = parse_bool(key, v);
  else if (key == "tone_curve") loss.tone_curve = parse_bool(key, v);
  else if (key == "n_freq_pos") field.n_freq_pos = static_cast<int>(parse_uint(key, v));
  else if (key == "n_freq_dir") field.n_freq_dir = static_cast<int>(parse_uint(key, v));
  else if (key == "include_input") field.include_input = parse_bool(key, v);
  else if (key == "width") field.width = parse_uint(key, v);
  else if (key == "depth") field.depth = parse_uint(key, v);
  else if (key == "skip") field.skip = parse_uint(key, v);
  else if (key == "lrd_rank") field.lrd_rank = parse_uint(key, v);
  else if (key == "lrd_filters") field.lrd_filters = parse_uint(key, v);
  else if (key == "lrd_enabled") field.lrd_enabled = parse_bool(key, v);
  else if (key == "lrd_order") {
    try {
      field.lrd_order = field::parse_lrd_order(v);
    } catch (const Error& e) {
      throw ConfigError(std::string("config key 'lrd_order': ") + e.what());
    }
  } else if (key == "illum_floor") field.illum_floor = parse_double(key, v);
  else if (key == "density_bias_init") field.density_bias_init = parse_double(key, v);
  else if (key == "seed") seed = parse_uint(key, v);
  else if (key == "tv_weight") tv_weight = parse_double(key, v);
  else if (key == "coarse_loss") coarse_loss = parse_bool(key, v);
  else if (key == "illum_init") illum_init = parse_bool(key, v);
  else if (key == "checkpoint_every") checkpoint_every = parse_uint(key, v);
  else if (key == "val_every") val_every = parse_uint(key, v);
  else if (key == "chunk") chunk = parse_uint(key, v);
  else if (key == "threads") threads = static_cast<unsigned>(parse_uint(key, v));
  else throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  auto u = [](std::uint64_t x) { return std::to_string(x); };
  return {
      {"batch_rays", u(batch_rays)},
      {"n_iters", u(n_iters)},
      {"n_coarse", u(sampling.n_coarse)},
      {"n_fine", u(sampling.n_fine)},
      {"white_background", b(sampling.white_background)},
      {"lr", format_double(lr)},
      {"cosine_period", u(cosine_period)},
      {"cosine_floor", format_double(cosine_floor)},
      {"cosine_cyclic", b(cosine_cyclic)},
      {"e_target", format_double(loss.e_target)},
      {"lambda_ic", format_double(loss.lambda_ic)},
      {"eps_tone", format_double(loss.eps_tone)},
      {"tone_clamp", b(loss.tone_clamp)},
      {"tone_curve", b(loss.tone_curve)},
      {"n_freq_pos", u(static_cast<std::uint64_t>(field.n_freq_pos))},
      {"n_freq_dir", u(static_cast<std::uint64_t>(field.n_freq_dir))},
      {"include_input", b(field.include_input)},
      {"width", u(field.width)},
      {"depth", u(field.depth)},
      {"skip", u(field.skip)},
      {"lrd_rank", u(field.lrd_rank)},
      {"lrd_filters", u(field.lrd_filters)},
      {"lrd_enabled", b(field.lrd_enabled)},
      {"lrd_order", field::to_string(field.lrd_order)},
      {"illum_floor", format_double(field.illum_floor)},
      {"density_bias_init", format_double(field.density_bias_init)},
      {"seed", u(seed)},
      {"tv_weight", format_double(tv_weight)},
      {"coarse_loss", b(coarse_loss)},
      {"illum_init", b(illum_init)},
      {"checkpoint_every", u(checkpoint_every)},
      {"val_every", u(val_every)},
      {"chunk", u(chunk)},
      {"threads", u(threads)},
  };
}

void TrainConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

std::string TrainConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

ad::CosineSchedule TrainConfig::schedule() const {
  return ad::CosineSchedule{lr, cosine_period, cosine_floor, cosine_cyclic};
}

void TrainConfig::validate() const {
  if (batch_rays < 1) throw ConfigError("batch_rays must be >= 1");
  if (n_iters < 1) throw ConfigError("n_iters must be >= 1");
  if (sampling.n_coarse < 2) throw ConfigError("n_coarse must be >= 2");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (cosine_period < 1) throw ConfigError("cosine_period must be >= 1");
  if (cosine_floor < 0.0 || cosine_floor > lr) throw ConfigError("cosine_floor must lie in [0, lr]");
  if (tv_weight < 0.0) throw ConfigError("tv_weight must be >= 0");
  if (chunk < 1) throw ConfigError("chunk must be >= 1");
  loss.validate();
  field.validate();
}

TrainConfig load_config_file(const fs::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  base.apply_text(ss.str());
  return base;
}

// --- scene meta -------------------------------------------------------------

SceneMeta SceneMeta::from_dataset(const io::SceneDataset& dataset) {
  SceneMeta meta;
  meta.camera_angle_x = dataset.camera_angle_x;
  meta.width = dataset.width();
  meta.height = dataset.height();
  meta.near = dataset.near;
  meta.far = dataset.far;
  if (dataset.frames.empty()) return meta;

  // Point closest (least squares) to every optical axis.
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  Eigen::Vector3d fallback = Eigen::Vector3d::Zero();
  for (const auto& frame : dataset.frames) {
    const Eigen::Vector3d o = frame.camera.position();
    const Eigen::Vector3d d = -frame.camera.c2w.block<3, 1>(0, 2).normalized();
    const Eigen::Matrix3d p = Eigen::Matrix3d::Identity() - d * d.transpose();
    a += p;
    rhs += p * o;
    fallback += o + d * 0.5 * (dataset.near + dataset.far);
  }
  fallback /= static_cast<double>(dataset.frames.size());
  Eigen::Vector3d center = fallback;
  if (std::abs(a.determinant()) > 1e-9) center = a.colPivHouseholderQr().solve(rhs);

  double radius = 0.0;
  double elevation = 0.0;
  for (const auto& frame : dataset.frames) {
    const Eigen::Vector3d off = frame.camera.position() - center;
    const double r = off.norm();
    radius += r;
    elevation += r > 0.0 ? std::asin(std::clamp(off.y() / r, -1.0, 1.0)) : 0.0;
  }
  meta.orbit_center = {center.x(), center.y(), center.z()};
  meta.orbit_radius = radius / static_cast<double>(dataset.frames.size());
  meta.orbit_elevation = elevation / static_cast<double>(dataset.frames.size());
  return meta;
}

Camera orbit_camera(const SceneMeta& meta, int index, int count) {
  if (count < 1) throw ConfigError("orbit needs at least one view");
  const double az = 2.0 * M_PI * static_cast<double>(index) / static_cast<double>(count);
  const Eigen::Vector3d center(meta.orbit_center[0], meta.orbit_center[1], meta.orbit_center[2]);
  const double el = meta.orbit_elevation;
  const Eigen::Vector3d back(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  Eigen::Vector3d right = Eigen::Vector3d::UnitY().cross(back);
  if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
  right.normalize();
  const Eigen::Vector3d up = back.cross(right);
  Camera cam;
  cam.width = meta.width;
  cam.height = meta.height;
  cam.camera_angle_x = meta.camera_angle_x;
  cam.c2w.block<3, 1>(0, 0) = right;
  cam.c2w.block<3, 1>(0, 1) = up;
  cam.c2w.block<3, 1>(0, 2) = back;
  cam.c2w.block<3, 1>(0, 3) = center + meta.orbit_radius * back;
  return cam;
}

// --- state ------------------------------------------------------------------

TrainerState TrainerState::initialize(const TrainConfig& config, const SceneMeta& meta) {
  config.validate();
  Rng rng(config.seed);
  field::RoseField coarse(config.field, rng);
  field::RoseField fine(config.field, rng);
  return TrainerState{config, meta, std::move(coarse), std::move(fine), ad::AdamState{}, rng, 0};
}

ad::ParameterList TrainerState::parameters() const {
  ad::ParameterList out = coarse.parameters("coarse");
  for (auto& p : fine.parameters("fine")) out.push_back(std::move(p));
  return out;
}

// --- checkpoints ------------------------------------------------------------
//
// Layout (little-endian):
//   8 bytes  magic "ROSECKPT"
//   u32      format version
//   u64      header length in bytes
//   header   JSON: config, meta, iteration, rng, adam, parameter names/shapes
//   f64[]    parameter values in header order
//   f64[]    Adam first moments, then second moments (when has_moments)

namespace {

json meta_to_json(const SceneMeta& m) {
  return json{{"camera_angle_x", m.camera_angle_x}, {"width", m.width},           {"height", m.height},
              {"near", m.near},                     {"far", m.far},               {"orbit_center", m.orbit_center},
              {"orbit_radius", m.orbit_radius},     {"orbit_elevation", m.orbit_elevation}};
}

SceneMeta meta_from_json(const json& j) {
  SceneMeta m;
  m.camera_angle_x = j.at("camera_angle_x").get<double>();
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  m.near = j.at("near").get<double>();
  m.far = j.at("far").get<double>();
  m.orbit_center = j.at("orbit_center").get<std::array<double, 3>>();
  m.orbit_radius = j.at("orbit_radius").get<double>();
  m.orbit_elevation = j.at("orbit_elevation").get<double>();
  return m;
}

void write_doubles(std::ostream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, double* dst, std::size_t n, const fs::path& path) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) {
    throw FormatError("checkpoint " + path.string() + " is truncated");
  }
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainerState& state) {
  const auto params = state.parameters();
  const bool has_moments = state.adam.m.size() == params.size();
  json header;
  header["config"] = state.config.to_map();
  header["meta"] = meta_to_json(state.meta);
  header["iteration"] = state.iteration;
  header["rng"] = state.rng.state();
  header["adam"] = json{{"step", state.adam.step},
                        {"beta1", state.adam.beta1},
                        {"beta2", state.adam.beta2},
                        {"eps", state.adam.eps},
                        {"has_moments", has_moments}};
  json jp = json::array();
  for (const auto& p : params) jp.push_back(json{{"name", p.name}, {"shape", p.tensor.shape()}});
  header["parameters"] = jp;
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) write_doubles(out, p.tensor.data());
    if (has_moments) {
      for (const auto& m : state.adam.m) write_doubles(out, m);
      for (const auto& v : state.adam.v) write_doubles(out, v);
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

TrainerState load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in) throw FormatError("checkpoint " + path.string() + " is truncated");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                      "; this build reads version " + std::to_string(kCheckpointVersion) +
                      ". Re-train or convert it with the matching release.");
  }
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (std::uint64_t{1} << 30)) throw FormatError("checkpoint " + path.string() + " has a corrupt header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len) throw FormatError("checkpoint " + path.string() + " is truncated");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path.string() + " has a corrupt header: " + e.what());
  }
  try {
    TrainConfig config;
    for (const auto& [k, v] : header.at("config").items()) config.set(k, v.get<std::string>());
    TrainerState state = TrainerState::initialize(config, meta_from_json(header.at("meta")));
    state.iteration = header.at("iteration").get<std::uint64_t>();
    state.rng.set_state(header.at("rng").get<std::string>());
    const auto& ja = header.at("adam");
    state.adam.step = ja.at("step").get<std::uint64_t>();
    state.adam.beta1 = ja.at("beta1").get<double>();
    state.adam.beta2 = ja.at("beta2").get<double>();
    state.adam.eps = ja.at("eps").get<double>();

    auto params = state.parameters();
    const auto& jp = header.at("parameters");
    if (jp.size() != params.size()) {
      throw FormatError("checkpoint " + path.string() + " lists " + std::to_string(jp.size()) +
                        " parameters, config implies " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto name = jp[i].at("name").get<std::string>();
      const auto shape = jp[i].at("shape").get<ad::Shape>();
      if (name != params[i].name || shape != params[i].tensor.shape()) {
        throw FormatError("checkpoint " + path.string() + ": parameter " + std::to_string(i) + " is '" + name + "' " +
                          ad::shape_to_string(shape) + ", expected '" + params[i].name + "' " +
                          ad::shape_to_string(params[i].tensor.shape()));
      }
      auto data = params[i].tensor.mutable_data();
      read_doubles(in, data.data(), data.size(), path);
    }
    if (ja.at("has_moments").get<bool>()) {
      state.adam.m.resize(params.size());
      state.adam.v.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        state.adam.m[i].resize(params[i].tensor.size());
        read_doubles(in, state.adam.m[i].data(), state.adam.m[i].size(), path);
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        state.adam.v[i].resize(params[i].tensor.size());
        read_doubles(in, state.adam.v[i].data(), state.adam.v[i].size(), path);
      }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
      throw FormatError("checkpoint " + path.string() + " has trailing bytes");
    }
    return state;
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path.string() + " has a corrupt header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint " + path.string() + " has an invalid config: " + e.what());
  }
}

// --- training ---------------------------------------------------------------

namespace {

struct Batch {
  RayBundle rays;
  std::vector<double> observed;  // [B, 3]
};

Batch sample_batch(const io::SceneDataset& dataset, const std::vector<std::size_t>& train_ids, std::size_t batch,
                   Rng& rng) {
  const std::size_t pixels = static_cast<std::size_t>(dataset.width()) * dataset.height();
  Batch out;
  out.rays.num_rays = batch;
  out.rays.near = dataset.near;
  out.rays.far = dataset.far;
  out.rays.origins.reserve(batch * 3);
  out.rays.dirs.reserve(batch * 3);
  out.observed.reserve(batch * 3);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::uint64_t flat = rng.index(train_ids.size() * pixels);
    const std::size_t view = train_ids[flat / pixels];
    const std::size_t pixel = flat % pixels;
    const RayBundle one = rays_for_pixels(dataset.frames[view].camera, std::span<const std::size_t>(&pixel, 1),
                                          dataset.near, dataset.far);
    out.rays.origins.insert(out.rays.origins.end(), one.origins.begin(), one.origins.end());
    out.rays.dirs.insert(out.rays.dirs.end(), one.dirs.begin(), one.dirs.end());
    const auto& img = dataset.images_low[view];
    for (int c = 0; c < 3; ++c) out.observed.push_back(img.pixels[pixel * 3 + c]);
  }
  return out;
}

// Sets the illuminance head bias so that i = mean(target) / e when the
// head's weights contribute nothing.
void init_illuminance_level(TrainerState& state, const io::SceneDataset& dataset,
                            const std::vector<std::size_t>& train_ids) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t view : train_ids) {
    const auto& px = dataset.images_low[view].pixels;
    const auto target = losses::reconstruction_target(ad::Tensor::from_data({px.size()}, px), state.config.loss);
    for (double v : target.data()) sum += v;
    count += px.size();
  }
  const double level = std::clamp(sum / static_cast<double>(count) / state.config.loss.e_target, 1e-3, 1.0);
  const double raw = std::log(std::expm1(std::max(level - state.config.field.illum_floor, 1e-6)));
  for (auto* f : {&state.coarse, &state.fine}) f->illum_head().bias.mutable_data()[0] = raw;
}

std::size_t snapshot_view(const io::SceneDataset& dataset) {
  for (auto split : {io::Split::kVal, io::Split::kTest, io::Split::kTrain}) {
    const auto ids = dataset.indices(split);
    if (!ids.empty()) return ids.front();
  }
  return 0;
}

std::string iter_tag(std::uint64_t it) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "iter_%06llu", static_cast<unsigned long long>(it));
  return buf;
}

}  // namespace

void train(const io::SceneDataset& dataset, TrainerState& state, const TrainOptions& options) {
  const TrainConfig& cfg = state.config;
  cfg.validate();
  const auto train_ids = dataset.indices(io::Split::kTrain);
  if (train_ids.size() < 2) {
    throw TrainingError("training needs at least 2 training views, dataset has " + std::to_string(train_ids.size()));
  }

  const bool write = !options.out_dir.empty();
  std::ofstream csv;
  if (write) {
    fs::create_directories(options.out_dir);
    const fs::path csv_path = options.out_dir / "loss.csv";
    const bool append = state.iteration > 0 && fs::exists(csv_path);
    csv.open(csv_path, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    if (!append) csv << "iter,lr,mse,ic,total\n";
    std::ofstream echo(options.out_dir / "config.txt", std::ios::trunc);
    echo << cfg.dump();
  }

  if (cfg.illum_init && state.iteration == 0 && state.adam.step == 0) {
    init_illuminance_level(state, dataset, train_ids);
  }
  auto params = state.parameters();
  const auto schedule = cfg.schedule();
  while (state.iteration < cfg.n_iters) {
    const std::uint64_t it = state.iteration;
    const double lr = ad::cosine_lr(schedule, it);

    Batch batch = sample_batch(dataset, train_ids, cfg.batch_rays, state.rng);
    render::PipelineOutput out;
    try {
      out = render::render_pipeline(state.coarse, state.fine, batch.rays, cfg.sampling, &state.rng);
    } catch (const DomainError& e) {
      throw TrainingError("diverged at iteration " + std::to_string(it) + " (lr " + format_double(lr) + "): " + e.what());
    }
    const auto observed = ad::Tensor::from_data({cfg.batch_rays, 3}, std::move(batch.observed));

    const auto mse = losses::loss_mse(out.fine.c_low, observed, cfg.loss);
    const auto ic = losses::loss_ic(out.fine.c_nor, cfg.loss);
    auto total = losses::loss_total(mse, ic, cfg.loss);
    if (cfg.coarse_loss) total = total + losses::loss_mse(out.coarse.c_low, observed, cfg.loss);
    if (cfg.tv_weight > 0.0) {
      const auto illum = ad::reshape(out.fine_samples.illum, {cfg.batch_rays, out.fine_bundle.num_samples});
      total = total + ad::scale(losses::loss_tv(illum), cfg.tv_weight);
    }

    const IterationLog log{it, lr, mse.item(), ic.item(), total.item()};
    if (!std::isfinite(log.total)) {
      throw TrainingError("non-finite loss at iteration " + std::to_string(it) + " (lr " + format_double(lr) +
                          ", mse " + format_double(log.mse) + ", ic " + format_double(log.ic) + ")");
    }
    ad::zero_grads(params);
    total.backward();
    ad::adam_step(params, state.adam, lr);
    state.iteration = it + 1;

    if (write) {
      csv << it << ',' << format_double(lr) << ',' << format_double(log.mse) << ',' << format_double(log.ic) << ','
          << format_double(log.total) << '\n';
    }
    if (options.on_iteration) options.on_iteration(log);

    if (write && cfg.val_every > 0 && state.iteration % cfg.val_every == 0) {
      const auto& cam = dataset.frames[snapshot_view(dataset)].camera;
      eval::write_view_outputs(options.out_dir / "val", iter_tag(state.iteration), render_view(state, cam));
    }
    if (write && cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 &&
        state.iteration < cfg.n_iters) {
      save_checkpoint(options.out_dir / ("ckpt_" + iter_tag(state.iteration) + ".bin"), state);
    }
  }
  if (write) {
    csv.flush();
    save_checkpoint(options.out_dir / "final.ckpt", state);
  }
}

TrainerState train(const io::SceneDataset& dataset, const TrainConfig& config, const TrainOptions& options) {
  TrainerState state = TrainerState::initialize(config, SceneMeta::from_dataset(dataset));
  train(dataset, state, options);
  return state;
}

render::RenderedImage render_view(const TrainerState& state, const Camera& camera) {
  return render::render_image(state.coarse, state.fine, camera, state.meta.near, state.meta.far,
                              state.config.sampling, state.config.chunk, state.config.threads);
}

}  // namespace rose::train
