// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "rose/error.hpp"
#include "rose/scene_io.hpp"

namespace rose::io {

using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw FormatError("unknown split '" + text + "'");
}

std::vector<std::size_t> SceneDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].split == split) out.push_back(i);
  }
  return out;
}

namespace {

fs::path with_png_extension(fs::path p) {
  if (!p.has_extension()) p += ".png";
  return p;
}

Image to_single_channel(const Image& rgb) {
  Image out(rgb.width, rgb.height, 1);
  for (std::size_t p = 0; p < rgb.pixel_count(); ++p) out.pixels[p] = rgb.pixels[p * 3];
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    json doc;
    in >> doc;
    return doc;
  } catch (const json::exception& e) {
    throw FormatError("malformed " + path.string() + ": " + e.what());
  }
}

// Bounds, fov and frames; image sizes are filled in by the caller.
SceneDataset parse_poses(const json& doc, const fs::path& path) {
  SceneDataset ds;
  try {
    ds.camera_angle_x = doc.at("camera_angle_x").get<double>();
    ds.near = doc.at("near").get<double>();
    ds.far = doc.at("far").get<double>();
    const auto& frames = doc.at("frames");
    if (!frames.is_array() || frames.empty()) throw FormatError(path.string() + " lists no frames");
    for (const auto& jf : frames) {
      Frame frame;
      frame.file_path = jf.at("file_path").get<std::string>();
      frame.split = parse_split(jf.value("split", std::string("train")));
      const auto& m = jf.at("transform_matrix");
      if (m.size() != 4) throw FormatError("frame " + frame.file_path + ": transform_matrix must have 4 rows");
      for (int r = 0; r < 4; ++r) {
        if (m[r].size() != 4) throw FormatError("frame " + frame.file_path + ": transform_matrix row is not length 4");
        for (int c = 0; c < 4; ++c) frame.camera.c2w(r, c) = m[r][c].get<double>();
      }
      frame.camera.camera_angle_x = ds.camera_angle_x;
      ds.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed " + path.string() + ": " + e.what());
  }
  if (!(ds.near >= 0.0 && ds.far > ds.near)) {
    throw FormatError(path.string() + ": need 0 <= near < far, got near=" + std::to_string(ds.near) +
                      " far=" + std::to_string(ds.far));
  }
  return ds;
}

}  // namespace

SceneDataset load_poses(const fs::path& poses_json, int default_width, int default_height) {
  const json doc = read_json(poses_json);
  SceneDataset ds = parse_poses(doc, poses_json);
  const int w = doc.value("w", default_width);
  const int h = doc.value("h", default_height);
  for (auto& frame : ds.frames) {
    frame.camera.width = w;
    frame.camera.height = h;
    try {
      frame.camera.validate();
    } catch (const FormatError& e) {
      throw FormatError("frame '" + frame.file_path + "': " + e.what());
    }
  }
  return ds;
}

SceneDataset load_dataset(const fs::path& dir) {
  const fs::path poses_path = dir / "poses.json";
  SceneDataset ds = parse_poses(read_json(poses_path), poses_path);
  std::set<fs::path> referenced;

  for (auto& frame : ds.frames) {
    const fs::path low = dir / with_png_extension(frame.file_path);
    if (!fs::exists(low)) throw FormatError("frame '" + frame.file_path + "' has no image at " + low.string());
    referenced.insert(fs::weakly_canonical(low));
    Image img = load_png(low);
    if (!ds.images_low.empty() && !img.same_shape(ds.images_low.front())) {
      throw FormatError("frame '" + frame.file_path + "' is " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + ", expected " + std::to_string(ds.images_low.front().width) +
                        "x" + std::to_string(ds.images_low.front().height));
    }
    frame.camera.width = img.width;
    frame.camera.height = img.height;
    try {
      frame.camera.validate();
    } catch (const FormatError& e) {
      throw FormatError("frame '" + frame.file_path + "': " + e.what());
    }
    const fs::path name = low.filename();
    const fs::path nor = dir / "images" / "nor" / name;
    const fs::path illum = dir / "illum" / name;
    ds.images_nor.push_back(fs::exists(nor) ? std::optional<Image>(load_png(nor)) : std::nullopt);
    ds.illum_gt.push_back(fs::exists(illum) ? std::optional<Image>(to_single_channel(load_png(illum)))
                                            : std::nullopt);
    ds.images_low.push_back(std::move(img));
  }

  // Every observed image must belong to a frame.
  const fs::path low_dir = dir / "images" / "low";
  if (fs::is_directory(low_dir)) {
    for (const auto& entry : fs::directory_iterator(low_dir)) {
      if (entry.path().extension() != ".png") continue;
      if (!referenced.count(fs::weakly_canonical(entry.path()))) {
        throw FormatError("image '" + entry.path().filename().string() + "' has no frame in poses.json");
      }
    }
  }
  return ds;
}

void write_dataset(const SceneDataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images" / "low", ec);
  if (ec) throw IoError("cannot create " + (dir / "images" / "low").string() + ": " + ec.message());
  if (dataset.images_low.size() != dataset.frames.size()) {
    throw FormatError("dataset has " + std::to_string(dataset.frames.size()) + " frames but " +
                      std::to_string(dataset.images_low.size()) + " images");
  }
  json doc;
  doc["camera_angle_x"] = dataset.camera_angle_x;
  doc["near"] = dataset.near;
  doc["far"] = dataset.far;
  doc["frames"] = json::array();
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    const Frame& frame = dataset.frames[i];
    json jf;
    jf["file_path"] = frame.file_path;
    jf["split"] = to_string(frame.split);
    json m = json::array();
    for (int r = 0; r < 4; ++r) {
      json row = json::array();
      for (int c = 0; c < 4; ++c) row.push_back(frame.camera.c2w(r, c));
      m.push_back(row);
    }
    jf["transform_matrix"] = m;
    doc["frames"].push_back(jf);

    const fs::path low = dir / with_png_extension(frame.file_path);
    save_png(low, dataset.images_low[i]);
    const fs::path name = low.filename();
    if (i < dataset.images_nor.size() && dataset.images_nor[i]) save_png(dir / "images" / "nor" / name, *dataset.images_nor[i]);
    if (i < dataset.illum_gt.size() && dataset.illum_gt[i]) save_png(dir / "illum" / name, *dataset.illum_gt[i]);
  }
  std::ofstream out(dir / "poses.json");
  if (!out) throw IoError("cannot write " + (dir / "poses.json").string());
  out << doc.dump(2) << '\n';
}

}  // namespace rose::io
