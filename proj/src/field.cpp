// SPDX-License-Identifier: Apache-2.0
#include "rose/field.hpp"

#include <cmath>
#include <numbers>

#include "rose/autodiff/ops.hpp"
#include "rose/error.hpp"

namespace rose::field {

namespace {

constexpr double kReluGain = std::numbers::sqrt2;

Tensor uniform_tensor(const ad::Shape& shape, double bound, Rng& rng) {
  std::vector<double> data(ad::num_elements(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(shape, std::move(data), true);
}

}  // namespace

std::size_t encoded_width(std::size_t in_dim, int n_freq, bool include_input) {
  return in_dim * ((include_input ? 1 : 0) + 2 * static_cast<std::size_t>(n_freq));
}

Tensor encode(const Tensor& v, int n_freq, bool include_input) {
  if (v.rank() != 2) throw ShapeError("encode expects [rows, d], got " + ad::shape_to_string(v.shape()));
  if (n_freq < 0) throw ConfigError("encode: negative frequency count");
  for (double x : v.data()) {
    if (!std::isfinite(x)) throw DomainError("encode: non-finite input");
  }
  std::vector<Tensor> parts;
  if (include_input) parts.push_back(v);
  for (int l = 0; l < n_freq; ++l) {
    const Tensor scaled = ad::scale(v, std::ldexp(std::numbers::pi, l));
    parts.push_back(ad::sin(scaled));
    parts.push_back(ad::cos(scaled));
  }
  if (parts.empty()) throw ConfigError("encode: empty encoding (no input and no frequencies)");
  return ad::concat(parts, 1);
}

Linear::Linear(std::size_t in, std::size_t out, double gain, Rng& rng)
    : weight(uniform_tensor({in, out}, gain * std::sqrt(3.0 / static_cast<double>(in)), rng)),
      bias(Tensor::zeros({out}, true)) {}

Tensor Linear::operator()(const Tensor& x) const { return ad::linear(x, weight, bias); }

void Linear::collect(ad::ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LrdModule::LrdModule(std::size_t channels, std::size_t rank, std::size_t filters, Rng& rng)
    : reduce_(channels, rank, 1.0, rng), expand_(rank, channels, 1.0, rng) {
  if (rank == 0 || filters == 0) throw ConfigError("LRD rank and filter count must be positive");
  if (rank >= channels) {
    throw ConfigError("LRD rank " + std::to_string(rank) + " must be below the feature width " +
                      std::to_string(channels));
  }
  std::vector<double> e(rank * filters);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(rank));
  for (auto& v : e) v = stddev * rng.normal();
  embedding_ = Tensor::from_data({rank, filters}, std::move(e), true);
}

LrdModule::Trace LrdModule::trace(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != channels()) {
    throw ShapeError("LRD expects [B, " + std::to_string(channels()) + "] features, got " +
                     ad::shape_to_string(features.shape()));
  }
  Trace t;
  t.reduced = reduce_(features);
  t.weights = ad::softmax(ad::matmul(t.reduced, embedding_));
  t.guidance = ad::matmul(t.weights, ad::transpose(embedding_));
  t.expanded = expand_(t.guidance);
  t.output = ad::mul(t.expanded, features);
  return t;
}

void LrdModule::collect(ad::ParameterList& out, const std::string& prefix) const {
  reduce_.collect(out, prefix + ".reduce");
  out.push_back({prefix + ".embedding", embedding_});
  expand_.collect(out, prefix + ".expand");
}

std::string to_string(LrdOrder order) { return order == LrdOrder::kLrdFirst ? "lrd_first" : "mlp_first"; }

LrdOrder parse_lrd_order(const std::string& text) {
  if (text == "lrd_first") return LrdOrder::kLrdFirst;
  if (text == "mlp_first") return LrdOrder::kMlpFirst;
  throw ConfigError("unknown lrd_order '" + text + "' (expected lrd_first or mlp_first)");
}

void FieldConfig::validate() const {
  if (width < 2) throw ConfigError("field width must be at least 2");
  if (depth < 1) throw ConfigError("field depth must be at least 1");
  if (skip >= depth) throw ConfigError("skip layer " + std::to_string(skip) + " must be below depth");
  if (n_freq_pos < 0 || n_freq_dir < 0) throw ConfigError("frequency counts must be non-negative");
  if (!include_input && (n_freq_pos == 0 || n_freq_dir == 0)) throw ConfigError("empty positional encoding");
  if (lrd_enabled && lrd_rank >= width) throw ConfigError("lrd_rank must be below width");
  if (!(illum_floor > 0.0)) throw ConfigError("illum_floor must be positive");
}

RoseField::RoseField(const FieldConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t c = config_.width;
  const std::size_t half = std::max<std::size_t>(c / 2, 1);
  const std::size_t pos_width = encoded_width(3, config_.n_freq_pos, config_.include_input);
  const std::size_t dir_width = encoded_width(3, config_.n_freq_dir, config_.include_input);
  for (std::size_t layer = 0; layer < config_.depth; ++layer) {
    std::size_t in = layer == 0 ? pos_width : c;
    if (config_.skip != 0 && layer == config_.skip) in += pos_width;
    trunk_.emplace_back(in, c, kReluGain, rng);
  }
  density_ = Linear(c, 1, 1.0, rng);
  std::fill(density_.bias.mutable_data().begin(), density_.bias.mutable_data().end(), config_.density_bias_init);
  color_hidden_ = Linear(c + dir_width, half, kReluGain, rng);
  color_out_ = Linear(half, 3, 1.0, rng);
  // The body maps C -> C/2 -> C so the LRD sees width C in either order.
  illum_hidden_ = Linear(c, half, kReluGain, rng);
  illum_hidden2_ = Linear(half, c, kReluGain, rng);
  illum_out_ = Linear(c, 1, 1.0, rng);
  if (config_.lrd_enabled) lrd_ = LrdModule(c, config_.lrd_rank, config_.lrd_filters, rng);
}

Tensor RoseField::features(const Tensor& x) const {
  const Tensor enc = encode(x, config_.n_freq_pos, config_.include_input);
  Tensor h = enc;
  for (std::size_t layer = 0; layer < trunk_.size(); ++layer) {
    if (config_.skip != 0 && layer == config_.skip) h = ad::concat({h, enc}, 1);
    h = ad::relu(trunk_[layer](h));
  }
  return h;
}

Tensor RoseField::illuminance(const Tensor& features) const {
  const bool lrd = config_.lrd_enabled;
  Tensor h = features;
  if (lrd && config_.lrd_order == LrdOrder::kLrdFirst) h = lrd_(h);
  h = ad::relu(illum_hidden_(h));
  h = ad::relu(illum_hidden2_(h));
  if (lrd && config_.lrd_order == LrdOrder::kMlpFirst) h = lrd_(h);
  const Tensor raw = illum_out_(h);
  return ad::reshape(ad::add_scalar(ad::softplus(raw), config_.illum_floor), {raw.dim(0)});
}

FieldSample RoseField::forward(const Tensor& x, const Tensor& d) const {
  if (x.rank() != 2 || x.dim(1) != 3 || d.shape() != x.shape()) {
    throw ShapeError("field forward expects matching [P, 3] positions and directions, got " +
                     ad::shape_to_string(x.shape()) + " and " + ad::shape_to_string(d.shape()));
  }
  const std::size_t p = x.dim(0);
  const Tensor fx = features(x);
  FieldSample out;
  out.sigma = ad::reshape(ad::softplus(density_(fx)), {p});
  const Tensor enc_d = encode(d, config_.n_freq_dir, config_.include_input);
  const Tensor hc = ad::relu(color_hidden_(ad::concat({fx, enc_d}, 1)));
  out.color = ad::sigmoid(color_out_(hc));
  out.illum = illuminance(fx);
  return out;
}

ad::ParameterList RoseField::parameters(const std::string& prefix) const {
  ad::ParameterList out;
  for (std::size_t i = 0; i < trunk_.size(); ++i) trunk_[i].collect(out, prefix + ".fx." + std::to_string(i));
  density_.collect(out, prefix + ".sigma");
  color_hidden_.collect(out, prefix + ".color.0");
  color_out_.collect(out, prefix + ".color.1");
  illum_hidden_.collect(out, prefix + ".illum.0");
  illum_hidden2_.collect(out, prefix + ".illum.1");
  illum_out_.collect(out, prefix + ".illum.2");
  if (config_.lrd_enabled) lrd_.collect(out, prefix + ".lrd");
  return out;
}

}  // namespace rose::field
