// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "rose/error.hpp"
#include "rose/eval.hpp"
#include "rose/trainer.hpp"
#include "test_support.hpp"

namespace rose::train {
namespace {

using testing::temp_dir;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig tiny_config() {
  TrainConfig c = TrainConfig::preset("ci");
  c.batch_rays = 48;
  c.n_iters = 12;
  c.sampling = {6, 6, false};
  c.field.width = 16;
  c.field.depth = 2;
  c.field.n_freq_pos = 3;
  c.field.n_freq_dir = 1;
  c.field.lrd_rank = 4;
  c.field.lrd_filters = 4;
  c.cosine_period = 12;
  c.lr = 5e-3;
  c.cosine_floor = 0.0;
  c.loss.tone_curve = false;
  return c;
}

const io::SceneDataset& tiny_dataset() {
  static const io::SceneDataset ds = [] {
    auto spec = io::synthetic_preset("constant02");
    spec.width = 16;
    spec.height = 16;
    spec.n_views = 6;
    spec.test_views = {1};
    spec.val_views = {4};
    return io::generate_synthetic(spec, {});
  }();
  return ds;
}

TEST(Config, DumpParsesBackToTheSameConfig) {
  TrainConfig a = TrainConfig::preset("desk");
  a.set("lr", "0.000123456789");
  a.set("lrd_order", "mlp_first");
  a.set("tone_clamp", "false");
  TrainConfig b;
  b.apply_text(a.dump());
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(b.lr, 0.000123456789);
  EXPECT_EQ(b.field.lrd_order, field::LrdOrder::kMlpFirst);
}

TEST(Config, DefaultsAndPaperPreset) {
  const TrainConfig desk = TrainConfig::preset("desk");
  EXPECT_EQ(desk.loss.e_target, 0.45);
  EXPECT_EQ(desk.loss.lambda_ic, 1e-3);
  EXPECT_EQ(desk.lr, 5e-4);
  EXPECT_EQ(desk.cosine_period, 2500u);
  EXPECT_EQ(desk.field.lrd_rank, 16u);
  EXPECT_EQ(desk.field.lrd_filters, 32u);
  EXPECT_EQ(desk.field.lrd_order, field::LrdOrder::kLrdFirst);
  const TrainConfig paper = TrainConfig::preset("paper");
  EXPECT_EQ(paper.n_iters, 75000u);
  EXPECT_EQ(paper.sampling.n_coarse, 64u);
  EXPECT_EQ(paper.sampling.n_fine, 128u);
  EXPECT_EQ(paper.field.n_freq_pos, 10);
  EXPECT_EQ(paper.field.n_freq_dir, 4);
  EXPECT_EQ(paper.batch_rays, 1024u);
  EXPECT_EQ(paper.lr, 5e-4);
  EXPECT_EQ(paper.cosine_period, 2500u);
  EXPECT_EQ(paper.loss.eps_tone, 1e-3);
  EXPECT_EQ(paper.loss.lambda_ic, 1e-3);
  EXPECT_EQ(paper.loss.e_target, 0.45);
  EXPECT_THROW(TrainConfig::preset("huge"), ConfigError);
}

TEST(Config, ErrorsNameTheKey) {
  TrainConfig c;
  try {
    c.set("learning_rate", "1");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  EXPECT_THROW(c.set("lr", "fast"), ConfigError);
  EXPECT_THROW(c.apply_text("lr 0.1"), ConfigError);
  c.lr = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Meta, OrbitCenterIsNearTheLookAtPoint) {
  const auto meta = SceneMeta::from_dataset(tiny_dataset());
  const auto spec = io::synthetic_preset("constant02");
  EXPECT_NEAR(meta.orbit_center[0], spec.look_at.x(), 1e-6);
  EXPECT_NEAR(meta.orbit_center[1], spec.look_at.y(), 1e-6);
  EXPECT_NEAR(meta.orbit_center[2], spec.look_at.z(), 1e-6);
  EXPECT_NEAR(meta.orbit_radius, spec.orbit_radius, 1e-6);
}

TEST(Training, LossDecreasesOnTinyScene) {
  TrainConfig c = tiny_config();
  c.n_iters = 120;
  c.cosine_period = 120;
  std::vector<double> totals;
  train(tiny_dataset(), c, {{}, [&](const IterationLog& l) { totals.push_back(l.total); }});
  ASSERT_EQ(totals.size(), 120u);
  double last = 0;
  for (int i = 0; i < 20; ++i) last += totals[totals.size() - 1 - i] / 20;
  EXPECT_LT(last, 0.5 * totals[0]);
}

TEST(Training, SameSeedGivesByteIdenticalOutputs) {
  const auto a = temp_dir("det_a"), b = temp_dir("det_b");
  train(tiny_dataset(), tiny_config(), {a, {}});
  train(tiny_dataset(), tiny_config(), {b, {}});
  EXPECT_EQ(read_file(a / "loss.csv"), read_file(b / "loss.csv"));
  EXPECT_EQ(read_file(a / "final.ckpt"), read_file(b / "final.ckpt"));
  TrainConfig other = tiny_config();
  other.seed = 1;
  const auto c = temp_dir("det_c");
  train(tiny_dataset(), other, {c, {}});
  EXPECT_NE(read_file(a / "loss.csv"), read_file(c / "loss.csv"));
}

TEST(Training, ResumeMatchesUninterruptedRun) {
  const auto full = temp_dir("resume_full"), part = temp_dir("resume_part");
  TrainConfig c = tiny_config();
  c.checkpoint_every = 5;
  train(tiny_dataset(), c, {full, {}});
  // Interrupted run: stop after 5, reload the checkpoint and continue.
  TrainConfig first = c;
  first.n_iters = 5;
  train(tiny_dataset(), first, {part, {}});
  TrainerState state = load_checkpoint(part / "final.ckpt");
  ASSERT_EQ(state.iteration, 5u);
  state.config.n_iters = c.n_iters;
  train(tiny_dataset(), state, {part, {}});
  EXPECT_EQ(read_file(full / "loss.csv"), read_file(part / "loss.csv"));
  EXPECT_EQ(read_file(full / "final.ckpt"), read_file(part / "final.ckpt"));
  EXPECT_TRUE(fs::exists(full / "ckpt_iter_000005.bin"));
  EXPECT_TRUE(fs::exists(full / "ckpt_iter_000010.bin"));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = temp_dir("ckpt_roundtrip");
  auto state = train(tiny_dataset(), tiny_config(), {});
  save_checkpoint(dir / "a.ckpt", state);
  save_checkpoint(dir / "b.ckpt", load_checkpoint(dir / "a.ckpt"));
  EXPECT_EQ(read_file(dir / "a.ckpt"), read_file(dir / "b.ckpt"));
}

TEST(Checkpoint, UntrainedStateRoundTrips) {
  const auto dir = temp_dir("ckpt_fresh");
  const auto state = TrainerState::initialize(tiny_config(), SceneMeta::from_dataset(tiny_dataset()));
  save_checkpoint(dir / "a.ckpt", state);
  const auto back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.iteration, 0u);
  const auto pa = state.parameters(), pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto da = pa[i].tensor.data(), db = pb[i].tensor.data();
    EXPECT_TRUE(std::equal(da.begin(), da.end(), db.begin(), db.end())) << pa[i].name;
  }
}

TEST(Checkpoint, CorruptionIsReported) {
  const auto dir = temp_dir("ckpt_corrupt");
  save_checkpoint(dir / "ok.ckpt", TrainerState::initialize(tiny_config(), SceneMeta::from_dataset(tiny_dataset())));
  const std::string good = read_file(dir / "ok.ckpt");

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << bad_magic;
  EXPECT_THROW(load_checkpoint(dir / "magic.ckpt"), FormatError);

  std::string bumped = good;
  bumped[8] = static_cast<char>(kCheckpointVersion + 1);
  std::ofstream(dir / "version.ckpt", std::ios::binary) << bumped;
  try {
    load_checkpoint(dir / "version.ckpt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }

  std::ofstream(dir / "short.ckpt", std::ios::binary) << good.substr(0, good.size() - 8);
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), FormatError);
  std::ofstream(dir / "long.ckpt", std::ios::binary) << good << "x";
  EXPECT_THROW(load_checkpoint(dir / "long.ckpt"), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST(Training, WithoutLrdAndWithTv) {
  TrainConfig c = tiny_config();
  c.field.lrd_enabled = false;
  c.tv_weight = 0.1;
  const auto state = train(tiny_dataset(), c, {});
  EXPECT_EQ(state.iteration, c.n_iters);
}

TEST(Training, NeedsTwoTrainingViews) {
  auto ds = tiny_dataset();
  for (auto& f : ds.frames) f.split = io::Split::kTest;
  ds.frames[0].split = io::Split::kTrain;
  EXPECT_THROW(train(ds, tiny_config(), {}), TrainingError);
}

TEST(Training, DivergenceIsReported) {
  TrainConfig c = tiny_config();
  c.lr = 1e300;
  c.cosine_floor = 0.0;
  c.n_iters = 5;
  try {
    train(tiny_dataset(), c, {});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}

TEST(Eval, ReportsPerViewMetrics) {
  const auto dir = temp_dir("eval_report");
  const auto state = train(tiny_dataset(), tiny_config(), {});
  const auto report = eval::eval_scene(state, tiny_dataset(), dir);
  ASSERT_EQ(report.views.size(), 1u);
  EXPECT_TRUE(std::isfinite(report.mean.psnr));
  EXPECT_TRUE(report.mean.illum_mae.has_value());
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  for (const auto& img : report.views[0].images) EXPECT_TRUE(fs::exists(dir / img)) << img;
}

TEST(Eval, EmptySplitIsAnError) {
  auto ds = tiny_dataset();
  for (auto& f : ds.frames) f.split = io::Split::kTrain;
  const auto state = TrainerState::initialize(tiny_config(), SceneMeta::from_dataset(ds));
  EXPECT_THROW(eval::eval_scene(state, ds, {}), FormatError);
}

TEST(Eval, HeatmapIsMinMaxNormalized) {
  Image i(2, 1, 1);
  i.pixels = {0.1, 0.3};
  const auto h = eval::illum_heatmap(i);
  ASSERT_EQ(h.channels, 3);
  EXPECT_NE(h.at(0, 0, 0) + h.at(0, 0, 1) + h.at(0, 0, 2), h.at(1, 0, 0) + h.at(1, 0, 1) + h.at(1, 0, 2));
  const auto flat = eval::illum_heatmap(Image(3, 3, 1, 0.4));
  EXPECT_EQ(flat.at(0, 0, 0), flat.at(2, 2, 0));
}

}  // namespace
}  // namespace rose::train
