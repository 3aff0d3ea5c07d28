// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numbers>
#include <numeric>

#include "rose/error.hpp"
#include "rose/random.hpp"
#include "rose/scene_io.hpp"

namespace rose::io {

using nlohmann::json;

double IllumTransition::at(const Eigen::Vector3d& p) const {
  if (kind == Kind::kConstant) return value;
  const double s = std::clamp((p[axis] - x0) / (x1 - x0), 0.0, 1.0);
  return v0 + (v1 - v0) * s;
}

void SyntheticSpec::validate() const {
  if (spheres.empty() && boxes.empty()) throw ConfigError("synthetic scene has no primitives");
  auto check_albedo = [](const Eigen::Vector3d& a) {
    if (a.minCoeff() < 0.0 || a.maxCoeff() > 1.0) throw ConfigError("albedo components must lie in [0, 1]");
  };
  for (const auto& s : spheres) {
    check_albedo(s.albedo);
    if (!(s.radius > 0.0)) throw ConfigError("sphere radius must be positive");
  }
  for (const auto& b : boxes) {
    check_albedo(b.albedo);
    if ((b.max - b.min).minCoeff() <= 0.0) throw ConfigError("box max must exceed min on every axis");
  }
  auto check_level = [](double v) {
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError("illuminance transition must lie in (0, 1]");
  };
  if (transition.kind == IllumTransition::Kind::kConstant) {
    check_level(transition.value);
  } else {
    check_level(transition.v0);
    check_level(transition.v1);
    if (transition.axis < 0 || transition.axis > 2) throw ConfigError("ramp axis must be 0, 1 or 2");
    if (!(transition.x1 != transition.x0)) throw ConfigError("ramp needs x0 != x1");
  }
  if (n_views < 2) throw ConfigError("need at least two views");
  if (width < 1 || height < 1) throw ConfigError("resolution must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(near >= 0.0 && far > near)) throw ConfigError("need 0 <= near < far");
  if (elevations_deg.empty()) throw ConfigError("need at least one camera elevation");
  if (light_dir.norm() == 0.0) throw ConfigError("light direction must be non-zero");
  for (int v : test_views) {
    if (v < 0 || v >= n_views) throw ConfigError("test view " + std::to_string(v) + " out of range");
  }
  for (int v : val_views) {
    if (v < 0 || v >= n_views) throw ConfigError("val view " + std::to_string(v) + " out of range");
  }
}

namespace {

SyntheticSpec desk_scene() {
  SyntheticSpec spec;
  spec.boxes.push_back({Eigen::Vector3d(-4.0, -0.3, -4.0), Eigen::Vector3d(4.0, 0.0, 4.0),
                        Eigen::Vector3d(0.62, 0.58, 0.52)});
  spec.boxes.push_back({Eigen::Vector3d(0.1, 0.0, 0.45), Eigen::Vector3d(0.65, 0.55, 1.0),
                        Eigen::Vector3d(0.3, 0.75, 0.35)});
  spec.spheres.push_back({Eigen::Vector3d(-0.55, 0.5, 0.05), 0.5, Eigen::Vector3d(0.9, 0.3, 0.22)});
  spec.spheres.push_back({Eigen::Vector3d(0.55, 0.35, -0.45), 0.35, Eigen::Vector3d(0.25, 0.45, 0.9)});
  return spec;
}

Eigen::Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector, got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const Eigen::Vector3d& v) { return json::array({v[0], v[1], v[2]}); }

std::optional<double> intersect_sphere(const Sphere& s, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  const Eigen::Vector3d oc = o - s.center;
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  const double t0 = -b - root;
  if (t0 > 1e-9) return t0;
  const double t1 = -b + root;
  if (t1 > 1e-9) return t1;
  return std::nullopt;
}

std::optional<double> intersect_box(const Box& box, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  double t_min = -std::numeric_limits<double>::infinity();
  double t_max = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < box.min[a] || o[a] > box.max[a]) return std::nullopt;
      continue;
    }
    double t0 = (box.min[a] - o[a]) / d[a];
    double t1 = (box.max[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_min = std::max(t_min, t0);
    t_max = std::min(t_max, t1);
  }
  if (t_max < t_min) return std::nullopt;
  if (t_min > 1e-9) return t_min;
  if (t_max > 1e-9) return t_max;
  return std::nullopt;
}

Eigen::Vector3d box_normal(const Box& box, const Eigen::Vector3d& p) {
  int best_axis = 0;
  double best = std::numeric_limits<double>::infinity();
  double sign = 1.0;
  for (int a = 0; a < 3; ++a) {
    const double dmin = std::abs(p[a] - box.min[a]);
    const double dmax = std::abs(p[a] - box.max[a]);
    if (dmin < best) {
      best = dmin;
      best_axis = a;
      sign = -1.0;
    }
    if (dmax < best) {
      best = dmax;
      best_axis = a;
      sign = 1.0;
    }
  }
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  n[best_axis] = sign;
  return n;
}

}  // namespace

SyntheticSpec synthetic_preset(const std::string& name) {
  SyntheticSpec spec = desk_scene();
  if (name == "constant02") {
    spec.transition.kind = IllumTransition::Kind::kConstant;
    spec.transition.value = 0.2;
    return spec;
  }
  if (name == "ramp") {
    spec.transition.kind = IllumTransition::Kind::kRamp;
    spec.transition.axis = 0;
    spec.transition.x0 = -1.5;
    spec.transition.x1 = 1.5;
    spec.transition.v0 = 0.12;
    spec.transition.v1 = 0.32;
    return spec;
  }
  throw ConfigError("unknown synthetic preset '" + name + "'");
}

std::vector<std::string> synthetic_preset_names() { return {"constant02", "ramp"}; }

SyntheticSpec spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed synthetic spec: ") + e.what());
  }
  SyntheticSpec spec;
  try {
    if (j.contains("preset")) spec = synthetic_preset(j["preset"].get<std::string>());
    if (j.contains("spheres")) {
      spec.spheres.clear();
      for (const auto& s : j["spheres"]) {
        spec.spheres.push_back({vec3(s.at("center")), s.at("radius").get<double>(), vec3(s.at("albedo"))});
      }
    }
    if (j.contains("boxes")) {
      spec.boxes.clear();
      for (const auto& b : j["boxes"]) spec.boxes.push_back({vec3(b.at("min")), vec3(b.at("max")), vec3(b.at("albedo"))});
    }
    if (j.contains("light_dir")) spec.light_dir = vec3(j["light_dir"]);
    if (j.contains("look_at")) spec.look_at = vec3(j["look_at"]);
    spec.ambient = j.value("ambient", spec.ambient);
    spec.illum_nor = j.value("illum_nor", spec.illum_nor);
    spec.normal_mean = j.value("normal_mean", spec.normal_mean);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.n_views = j.value("n_views", spec.n_views);
    spec.width = j.value("width", spec.width);
    spec.height = j.value("height", spec.height);
    spec.seed = j.value("seed", spec.seed);
    spec.camera_angle_x = j.value("camera_angle_x", spec.camera_angle_x);
    spec.orbit_radius = j.value("orbit_radius", spec.orbit_radius);
    spec.elevations_deg = j.value("elevations_deg", spec.elevations_deg);
    spec.near = j.value("near", spec.near);
    spec.far = j.value("far", spec.far);
    spec.test_views = j.value("test_views", spec.test_views);
    spec.val_views = j.value("val_views", spec.val_views);
    if (j.contains("transition")) {
      const auto& t = j["transition"];
      const std::string kind = t.value("kind", std::string("constant"));
      if (kind == "constant") {
        spec.transition.kind = IllumTransition::Kind::kConstant;
      } else if (kind == "ramp") {
        spec.transition.kind = IllumTransition::Kind::kRamp;
      } else {
        throw ConfigError("unknown transition kind '" + kind + "'");
      }
      spec.transition.value = t.value("value", spec.transition.value);
      spec.transition.axis = t.value("axis", spec.transition.axis);
      spec.transition.x0 = t.value("x0", spec.transition.x0);
      spec.transition.x1 = t.value("x1", spec.transition.x1);
      spec.transition.v0 = t.value("v0", spec.transition.v0);
      spec.transition.v1 = t.value("v1", spec.transition.v1);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid synthetic spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string spec_to_json(const SyntheticSpec& spec) {
  json j;
  j["spheres"] = json::array();
  for (const auto& s : spec.spheres) {
    j["spheres"].push_back({{"center", to_json(s.center)}, {"radius", s.radius}, {"albedo", to_json(s.albedo)}});
  }
  j["boxes"] = json::array();
  for (const auto& b : spec.boxes) {
    j["boxes"].push_back({{"min", to_json(b.min)}, {"max", to_json(b.max)}, {"albedo", to_json(b.albedo)}});
  }
  j["light_dir"] = to_json(spec.light_dir);
  j["look_at"] = to_json(spec.look_at);
  j["ambient"] = spec.ambient;
  j["illum_nor"] = spec.illum_nor;
  j["normal_mean"] = spec.normal_mean;
  j["noise_sigma"] = spec.noise_sigma;
  j["n_views"] = spec.n_views;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["seed"] = spec.seed;
  j["camera_angle_x"] = spec.camera_angle_x;
  j["orbit_radius"] = spec.orbit_radius;
  j["elevations_deg"] = spec.elevations_deg;
  j["near"] = spec.near;
  j["far"] = spec.far;
  j["test_views"] = spec.test_views;
  j["val_views"] = spec.val_views;
  const auto& t = spec.transition;
  j["transition"] = {{"kind", t.kind == IllumTransition::Kind::kConstant ? "constant" : "ramp"},
                     {"value", t.value},
                     {"axis", t.axis},
                     {"x0", t.x0},
                     {"x1", t.x1},
                     {"v0", t.v0},
                     {"v1", t.v1}};
  return j.dump(2);
}

Camera synthetic_camera(const SyntheticSpec& spec, int index) {
  const double azimuth = 2.0 * std::numbers::pi * index / spec.n_views;
  const double elevation =
      spec.elevations_deg[static_cast<std::size_t>(index) % spec.elevations_deg.size()] * std::numbers::pi / 180.0;
  const Eigen::Vector3d offset(std::cos(elevation) * std::sin(azimuth), std::sin(elevation),
                               std::cos(elevation) * std::cos(azimuth));
  const Eigen::Vector3d position = spec.look_at + spec.orbit_radius * offset;
  const Eigen::Vector3d back = offset.normalized();  // camera +z points away from the target
  const Eigen::Vector3d right = Eigen::Vector3d::UnitY().cross(back).normalized();
  const Eigen::Vector3d up = back.cross(right);
  Camera cam;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.camera_angle_x = spec.camera_angle_x;
  cam.c2w.setIdentity();
  cam.c2w.block<3, 1>(0, 0) = right;
  cam.c2w.block<3, 1>(0, 1) = up;
  cam.c2w.block<3, 1>(0, 2) = back;
  cam.c2w.block<3, 1>(0, 3) = position;
  return cam;
}

std::optional<SurfaceHit> trace(const SyntheticSpec& spec, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  std::optional<SurfaceHit> best;
  for (const auto& s : spec.spheres) {
    if (auto t = intersect_sphere(s, origin, dir); t && (!best || *t < best->t)) {
      SurfaceHit hit;
      hit.t = *t;
      hit.point = origin + *t * dir;
      hit.normal = (hit.point - s.center).normalized();
      hit.albedo = s.albedo;
      best = hit;
    }
  }
  for (const auto& b : spec.boxes) {
    if (auto t = intersect_box(b, origin, dir); t && (!best || *t < best->t)) {
      SurfaceHit hit;
      hit.t = *t;
      hit.point = origin + *t * dir;
      hit.normal = box_normal(b, hit.point);
      hit.albedo = b.albedo;
      best = hit;
    }
  }
  return best;
}

SceneDataset generate_synthetic(const SyntheticSpec& spec, const fs::path& out) {
  spec.validate();
  const Eigen::Vector3d light = spec.light_dir.normalized();
  std::vector<Camera> cameras;
  for (int v = 0; v < spec.n_views; ++v) {
    Camera cam = synthetic_camera(spec, v);
    const Eigen::Vector3d p = cam.position();
    for (const auto& s : spec.spheres) {
      if ((p - s.center).norm() <= s.radius) throw ConfigError("camera " + std::to_string(v) + " is inside a sphere");
    }
    for (const auto& b : spec.boxes) {
      if ((p.array() >= b.min.array()).all() && (p.array() <= b.max.array()).all()) {
        throw ConfigError("camera " + std::to_string(v) + " is inside a box");
      }
    }
    cameras.push_back(cam);
  }

  // Unit-level shading and surface-hit transition per view.
  const std::size_t npix = static_cast<std::size_t>(spec.width) * spec.height;
  std::vector<std::size_t> ids(npix);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<Image> shading;
  std::vector<Image> transition;
  double total = 0.0;
  for (const auto& cam : cameras) {
    const RayBundle rays = rays_for_pixels(cam, ids, spec.near, spec.far);
    Image shade(spec.width, spec.height, 3);
    Image trans(spec.width, spec.height, 1);
    for (std::size_t p = 0; p < npix; ++p) {
      const Eigen::Vector3d o(rays.origins[p * 3], rays.origins[p * 3 + 1], rays.origins[p * 3 + 2]);
      const Eigen::Vector3d d(rays.dirs[p * 3], rays.dirs[p * 3 + 1], rays.dirs[p * 3 + 2]);
      const auto hit = trace(spec, o, d);
      if (!hit) continue;
      const double lambert = spec.ambient + (1.0 - spec.ambient) * std::max(0.0, hit->normal.dot(light));
      for (int c = 0; c < 3; ++c) {
        shade.pixels[p * 3 + c] = hit->albedo[c] * lambert;
        total += shade.pixels[p * 3 + c];
      }
      trans.pixels[p] = spec.transition.at(hit->point);
    }
    shading.push_back(std::move(shade));
    transition.push_back(std::move(trans));
  }
  double level = spec.illum_nor;
  if (spec.normal_mean > 0.0) {
    const double mean = total / static_cast<double>(npix * 3 * cameras.size());
    if (!(mean > 0.0)) throw ConfigError("synthetic scene is empty from every view");
    level = spec.normal_mean / mean;
  }

  SceneDataset ds;
  ds.camera_angle_x = spec.camera_angle_x;
  ds.near = spec.near;
  ds.far = spec.far;
  Rng rng(spec.seed);
  for (int v = 0; v < spec.n_views; ++v) {
    Frame frame;
    char name[32];
    std::snprintf(name, sizeof(name), "r_%03d.png", v);
    frame.file_path = std::string("images/low/") + name;
    frame.camera = cameras[static_cast<std::size_t>(v)];
    if (std::find(spec.test_views.begin(), spec.test_views.end(), v) != spec.test_views.end()) {
      frame.split = Split::kTest;
    } else if (std::find(spec.val_views.begin(), spec.val_views.end(), v) != spec.val_views.end()) {
      frame.split = Split::kVal;
    }
    Image nor(spec.width, spec.height, 3);
    Image low(spec.width, spec.height, 3);
    const Image& shade = shading[static_cast<std::size_t>(v)];
    const Image& trans = transition[static_cast<std::size_t>(v)];
    for (std::size_t p = 0; p < npix; ++p) {
      for (int c = 0; c < 3; ++c) {
        const double z_nor = std::clamp(level * shade.pixels[p * 3 + c], 0.0, 1.0);
        nor.pixels[p * 3 + c] = z_nor;
        double z_low = z_nor * trans.pixels[p];
        if (spec.noise_sigma > 0.0) z_low = std::clamp(z_low + spec.noise_sigma * rng.normal(), 0.0, 1.0);
        low.pixels[p * 3 + c] = z_low;
      }
    }
    ds.frames.push_back(frame);
    ds.images_low.push_back(std::move(low));
    ds.images_nor.push_back(std::move(nor));
    ds.illum_gt.push_back(trans);
  }
  if (!out.empty()) {
    write_dataset(ds, out);
    std::ofstream spec_file(out / "synthetic_spec.json");
    spec_file << spec_to_json(spec) << '\n';
  }
  return ds;
}

}  // namespace rose::io
