// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "rose/cli.hpp"
#include "rose/error.hpp"
#include "rose/eval.hpp"
#include "rose/scene_io.hpp"
#include "rose/trainer.hpp"

namespace rose::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Flags shared by train and ablate.
struct ConfigFlags {
  std::string preset = "desk";
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> iters;
  std::optional<unsigned> threads;
  std::vector<std::string> overrides;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Hyperparameter preset")->check(CLI::IsMember({"desk", "paper", "ci"}));
    cmd->add_option("--config", config_file, "key = value config file applied over the preset")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Random seed (falls back to $ROSE_SEED, then the config)");
    cmd->add_option("--iters", iters, "Override n_iters");
    cmd->add_option("--threads", threads, "Rendering threads; 1 is the deterministic path")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--set", overrides, "Extra key=value overrides, applied last");
  }

  train::TrainConfig resolve() const {
    train::TrainConfig cfg = train::TrainConfig::preset(preset);
    if (!config_file.empty()) cfg = train::load_config_file(config_file, cfg);
    if (seed) {
      cfg.seed = *seed;
    } else if (const char* env = std::getenv("ROSE_SEED")) {
      cfg.set("seed", env);
    }
    if (iters) cfg.n_iters = *iters;
    if (threads) cfg.threads = *threads;
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }
};

void print_progress(std::ostream& out, const train::IterationLog& log, std::uint64_t n_iters) {
  const std::uint64_t step = std::max<std::uint64_t>(1, n_iters / 20);
  if (log.iteration % step != 0 && log.iteration + 1 != n_iters) return;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "iter %6llu  lr %.3e  mse %.6f  ic %.6f  total %.6f\n",
                static_cast<unsigned long long>(log.iteration), log.lr, log.mse, log.ic, log.total);
  out << buf << std::flush;
}

void print_report(std::ostream& out, const eval::EvalReport& report) {
  char buf[200];
  for (const auto& v : report.views) {
    std::snprintf(buf, sizeof(buf), "%-12s psnr %7.3f  ssim %.4f  mean %.4f  illum %.4f\n", v.name.c_str(), v.psnr,
                  v.ssim, v.mean_intensity, v.mean_illum);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-12s psnr %7.3f  ssim %.4f  mean %.4f  illum %.4f\n", "mean", report.mean.psnr,
                report.mean.ssim, report.mean.mean_intensity, report.mean.mean_illum);
  out << buf;
}

int cmd_synth(const std::string& preset, const std::string& spec_file, std::optional<double> noise,
              std::optional<int> size, std::optional<std::uint64_t> seed, const std::string& out_dir,
              std::ostream& out) {
  io::SyntheticSpec spec = spec_file.empty() ? io::synthetic_preset(preset) : io::spec_from_json(read_text(spec_file));
  if (noise) spec.noise_sigma = *noise;
  if (size) spec.width = spec.height = *size;
  if (seed) spec.seed = *seed;
  spec.validate();
  const auto ds = io::generate_synthetic(spec, out_dir);

  double lo = 1.0, hi = 0.0, sum = 0.0;
  std::size_t n = 0;
  for (const auto& img : ds.illum_gt) {
    if (!img) continue;
    for (double v : img->pixels) {
      if (v <= 0.0) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
      ++n;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "wrote %zu views (%dx%d) to %s\nilluminance on surfaces: min %.4f mean %.4f max %.4f\n",
                ds.frames.size(), spec.width, spec.height, out_dir.c_str(), n ? lo : 0.0, n ? sum / n : 0.0,
                n ? hi : 0.0);
  out << buf;
  return kExitOk;
}

int cmd_train(const std::string& data, const std::string& out_dir, const std::string& resume, bool dry_run,
              const ConfigFlags& flags, std::ostream& out) {
  train::TrainConfig cfg = flags.resolve();
  out << "# config\n" << cfg.dump() << std::flush;
  if (dry_run) return kExitOk;
  const auto dataset = io::load_dataset(data);
  train::TrainOptions options;
  options.out_dir = out_dir;
  options.on_iteration = [&](const train::IterationLog& log) { print_progress(out, log, cfg.n_iters); };
  if (!resume.empty()) {
    train::TrainerState state = train::load_checkpoint(resume);
    // Only the iteration budget and rendering knobs may change on resume.
    state.config.n_iters = cfg.n_iters;
    state.config.threads = cfg.threads;
    out << "resuming from iteration " << state.iteration << "\n";
    train::train(dataset, state, options);
  } else {
    train::train(dataset, cfg, options);
  }
  out << "final checkpoint: " << (fs::path(out_dir) / "final.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_render(const std::string& ckpt, const std::string& poses, std::optional<int> orbit, const std::string& out_dir,
               std::optional<unsigned> threads, std::ostream& out) {
  if (poses.empty() == !orbit) throw UsageError("render needs exactly one of --poses or --orbit");
  train::TrainerState state = train::load_checkpoint(ckpt);
  if (threads) state.config.threads = *threads;
  std::vector<std::pair<std::string, Camera>> views;
  if (orbit) {
    if (*orbit < 1) throw UsageError("--orbit must be >= 1");
    for (int i = 0; i < *orbit; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "orbit_%03d", i);
      views.emplace_back(name, train::orbit_camera(state.meta, i, *orbit));
    }
  } else {
    const auto ds = io::load_poses(poses, state.meta.width, state.meta.height);
    for (const auto& f : ds.frames) views.emplace_back(fs::path(f.file_path).stem().string(), f.camera);
  }
  for (const auto& [name, cam] : views) {
    eval::write_view_outputs(out_dir, name, train::render_view(state, cam));
    out << "rendered " << name << "\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& out_dir, const std::string& split,
             std::optional<unsigned> threads, std::ostream& out) {
  train::TrainerState state = train::load_checkpoint(ckpt);
  if (threads) state.config.threads = *threads;
  const auto dataset = io::load_dataset(data);
  const auto report = eval::eval_scene(state, dataset, out_dir, io::parse_split(split));
  print_report(out, report);
  return kExitOk;
}

struct AblationRow {
  std::string tag;
  train::TrainConfig config;
};

std::vector<AblationRow> ablation_matrix(const train::TrainConfig& base, const std::vector<std::string>& axes,
                                         const std::vector<std::uint64_t>& seeds, double tv_on) {
  std::vector<AblationRow> rows{{"", base}};
  for (const auto& axis : axes) {
    std::vector<AblationRow> next;
    for (const auto& row : rows) {
      auto add = [&](const std::string& label, auto&& apply) {
        AblationRow r = row;
        apply(r.config);
        r.tag += (r.tag.empty() ? "" : "_") + label;
        next.push_back(std::move(r));
      };
      if (axis == "lrd") {
        add("lrd-on", [](auto& c) { c.field.lrd_enabled = true; });
        add("lrd-off", [](auto& c) { c.field.lrd_enabled = false; });
      } else if (axis == "order") {
        add("lrd_first", [](auto& c) { c.field.lrd_order = field::LrdOrder::kLrdFirst; });
        add("mlp_first", [](auto& c) { c.field.lrd_order = field::LrdOrder::kMlpFirst; });
      } else if (axis == "e") {
        for (double e : {0.3, 0.45, 0.6}) {
          char label[16];
          std::snprintf(label, sizeof(label), "e%.2f", e);
          add(label, [e](auto& c) { c.loss.e_target = e; });
        }
      } else if (axis == "tv") {
        add("tv-off", [](auto& c) { c.tv_weight = 0.0; });
        add("tv-on", [tv_on](auto& c) { c.tv_weight = tv_on; });
      } else {
        throw UsageError("unknown ablation axis '" + axis + "' (expected lrd, order, e, tv)");
      }
    }
    rows = std::move(next);
  }
  if (seeds.empty()) return rows;
  std::vector<AblationRow> seeded;
  for (const auto& row : rows) {
    for (auto s : seeds) {
      AblationRow r = row;
      r.config.seed = s;
      r.tag += (r.tag.empty() ? "" : "_") + ("seed" + std::to_string(s));
      seeded.push_back(std::move(r));
    }
  }
  return seeded;
}

int cmd_ablate(const std::string& data, const std::string& out_dir, const std::string& axes_text,
               const std::string& seeds_text, double tv_on, const ConfigFlags& flags, std::ostream& out) {
  const auto axes = split_list(axes_text);
  if (axes.empty()) throw UsageError("--axes lists no axes");
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(seeds_text)) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw UsageError("--seeds: '" + s + "' is not an integer");
    }
  }
  const train::TrainConfig base = flags.resolve();
  const auto rows = ablation_matrix(base, axes, seeds, tv_on);
  const auto dataset = io::load_dataset(data);
  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "summary.csv");
  if (!csv) throw IoError("cannot write " + (fs::path(out_dir) / "summary.csv").string());
  csv << "config,seed,lrd_enabled,lrd_order,e_target,tv_weight,psnr,ssim,mean_intensity,mean_illum,illum_mae\n";
  out << "# base config\n" << base.dump() << "# " << rows.size() << " runs\n" << std::flush;
  for (const auto& row : rows) {
    out << "== " << row.tag << "\n" << std::flush;
    const fs::path run_dir = fs::path(out_dir) / row.tag;
    train::TrainOptions options;
    options.out_dir = run_dir;
    const auto state = train::train(dataset, row.config, options);
    const auto report = eval::eval_scene(state, dataset, run_dir / "eval");
    print_report(out, report);
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%s,%llu,%s,%s,%.4f,%.6g,%.6f,%.6f,%.6f,%.6f,%s\n", row.tag.c_str(),
                  static_cast<unsigned long long>(row.config.seed), row.config.field.lrd_enabled ? "true" : "false",
                  field::to_string(row.config.field.lrd_order).c_str(), row.config.loss.e_target,
                  row.config.tv_weight, report.mean.psnr, report.mean.ssim, report.mean.mean_intensity,
                  report.mean.mean_illum,
                  report.mean.illum_mae ? std::to_string(*report.mean.illum_mae).c_str() : "");
    csv << buf << std::flush;
  }
  out << "summary: " << (fs::path(out_dir) / "summary.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"rose: low-light scene restoration with a dual-branch radiance field"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic low-light dataset");
  std::string synth_preset = "constant02";
  std::string synth_spec;
  std::optional<double> synth_noise;
  std::optional<int> synth_size;
  std::optional<std::uint64_t> synth_seed;
  std::string synth_out;
  synth->add_option("--preset", synth_preset, "Scene preset")->check(CLI::IsMember(io::synthetic_preset_names()));
  synth->add_option("--spec", synth_spec, "JSON scene spec (overrides --preset)")->check(CLI::ExistingFile);
  synth->add_option("--noise", synth_noise, "Gaussian noise sigma added to low-light images")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--size", synth_size, "Image width and height")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Noise seed");
  synth->add_option("--out", synth_out, "Output dataset directory")->required();

  // train
  auto* trn = app.add_subcommand("train", "Train on a dataset");
  std::string train_data, train_out, train_resume;
  bool train_dry = false;
  ConfigFlags train_flags;
  trn->add_option("--data", train_data, "Dataset directory")->check(CLI::ExistingDirectory);
  trn->add_option("--out", train_out, "Output directory (checkpoints, loss.csv, val/)");
  trn->add_option("--resume", train_resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  trn->add_flag("--dry-run", train_dry, "Print the resolved config and exit");
  train_flags.add_to(trn);

  // render
  auto* rnd = app.add_subcommand("render", "Render novel views from a checkpoint");
  std::string render_ckpt, render_poses, render_out;
  std::optional<int> render_orbit;
  std::optional<unsigned> render_threads;
  rnd->add_option("--ckpt", render_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  auto* poses_opt = rnd->add_option("--poses", render_poses, "poses.json with cameras to render")
                        ->check(CLI::ExistingFile);
  auto* orbit_opt = rnd->add_option("--orbit", render_orbit, "Render n views on the training orbit");
  poses_opt->excludes(orbit_opt);
  rnd->add_option("--out", render_out, "Output directory")->required();
  rnd->add_option("--threads", render_threads, "Rendering threads")->check(CLI::PositiveNumber);

  // eval
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint against ground truth");
  std::string eval_ckpt, eval_data, eval_out, eval_split = "test";
  std::optional<unsigned> eval_threads;
  evl->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  evl->add_option("--data", eval_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evl->add_option("--out", eval_out, "Output directory for report.json and renders")->required();
  evl->add_option("--split", eval_split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  evl->add_option("--threads", eval_threads, "Rendering threads")->check(CLI::PositiveNumber);

  // ablate
  auto* abl = app.add_subcommand("ablate", "Train and evaluate a matrix of ablation configs");
  std::string abl_data, abl_out, abl_axes = "lrd", abl_seeds;
  double abl_tv = 1e-2;
  ConfigFlags abl_flags;
  abl->add_option("--data", abl_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--out", abl_out, "Output directory")->required();
  abl->add_option("--axes", abl_axes, "Comma list from lrd, order, e, tv");
  abl->add_option("--seeds", abl_seeds, "Comma list of seeds; each config runs once per seed");
  abl->add_option("--tv-weight", abl_tv, "tv_weight used by the tv-on rows")->check(CLI::NonNegativeNumber);
  abl_flags.add_to(abl);

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      return cmd_synth(synth_preset, synth_spec, synth_noise, synth_size, synth_seed, synth_out, out);
    }
    if (trn->parsed()) {
      if (!train_dry && (train_data.empty() || train_out.empty())) {
        throw UsageError("train needs --data and --out (or --dry-run)");
      }
      return cmd_train(train_data, train_out, train_resume, train_dry, train_flags, out);
    }
    if (rnd->parsed()) return cmd_render(render_ckpt, render_poses, render_orbit, render_out, render_threads, out);
    if (evl->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_out, eval_split, eval_threads, out);
    if (abl->parsed()) return cmd_ablate(abl_data, abl_out, abl_axes, abl_seeds, abl_tv, abl_flags, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace rose::cli
