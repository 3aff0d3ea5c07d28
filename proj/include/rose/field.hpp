// SPDX-License-Identifier: Apache-2.0
//
// The dual-branch radiance field: a location MLP shared by a density head,
// a view-dependent color head, and a direction-free illuminance-transition
// head guided by a low-rank denoising (LRD) module.
#pragma once

#include <cstddef>
#include <string>

#include "rose/autodiff/optim.hpp"
#include "rose/autodiff/tensor.hpp"
#include "rose/random.hpp"

namespace rose::field {

using ad::Tensor;

std::size_t encoded_width(std::size_t in_dim, int n_freq, bool include_input);

/// Sinusoidal encoding of a [rows, d] tensor:
/// [v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(L-1) pi v), cos(2^(L-1) pi v)],
/// each block d wide.
Tensor encode(const Tensor& v, int n_freq, bool include_input = true);

/// Fully connected layer y = x W + b with W stored [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  /// Uniform fan-in init with bound gain * sqrt(3 / in); zero bias.
  Linear(std::size_t in, std::size_t out, double gain, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  void collect(ad::ParameterList& out, const std::string& prefix) const;
};

/// Reduction-reconstruction-reweight block.
///   f_k  = reduce(f_x)                       [B, k]
///   w    = softmax(f_k E)                    [B, M]
///   f_g  = w E^T                             [B, k]
///   f_i  = expand(f_g) * f_x                 [B, C]
/// E is the [k, M] learnable filter bank, so f_g is a convex combination
/// of the M columns of E and has rank at most min(k, M) over a batch.
class LrdModule {
 public:
  struct Trace {
    Tensor reduced;      // f_k
    Tensor weights;      // w
    Tensor guidance;     // f_g
    Tensor expanded;     // expand(f_g)
    Tensor output;       // f_i
  };

  LrdModule() = default;
  LrdModule(std::size_t channels, std::size_t rank, std::size_t filters, Rng& rng);

  Tensor operator()(const Tensor& features) const { return trace(features).output; }
  Trace trace(const Tensor& features) const;

  std::size_t channels() const { return reduce_.in_features(); }
  std::size_t rank() const { return reduce_.out_features(); }
  std::size_t filters() const { return embedding_.dim(1); }
  const Tensor& embedding() const { return embedding_; }
  void collect(ad::ParameterList& out, const std::string& prefix) const;

 private:
  Linear reduce_;
  Tensor embedding_;
  Linear expand_;
};

enum class LrdOrder { kLrdFirst, kMlpFirst };

std::string to_string(LrdOrder order);
LrdOrder parse_lrd_order(const std::string& text);

struct FieldConfig {
  int n_freq_pos = 10;
  int n_freq_dir = 4;
  bool include_input = true;
  std::size_t width = 128;  // C
  std::size_t depth = 8;    // layers in the location MLP
  std::size_t skip = 4;     // layer that re-reads the encoded position; 0 disables
  std::size_t lrd_rank = 16;      // k
  std::size_t lrd_filters = 32;   // M
  bool lrd_enabled = true;
  LrdOrder lrd_order = LrdOrder::kLrdFirst;
  double illum_floor = 1e-4;
  // Initial bias of the density head; sigma = softplus(raw).
  double density_bias_init = 0.0;

  void validate() const;
};

/// Per-sample field outputs for P points.
struct FieldSample {
  Tensor sigma;  // [P], >= 0
  Tensor color;  // [P, 3], in [0, 1]
  Tensor illum;  // [P], > 0
};

class RoseField {
 public:
  RoseField() = default;
  RoseField(const FieldConfig& config, Rng& rng);

  /// x, d: [P, 3]. sigma and illum never read d.
  FieldSample forward(const Tensor& x, const Tensor& d) const;

  /// Location features f_x for [P, 3] positions.
  Tensor features(const Tensor& x) const;
  /// Illuminance branch on location features: LRD and F_i in the configured order.
  Tensor illuminance(const Tensor& features) const;

  ad::ParameterList parameters(const std::string& prefix) const;
  const FieldConfig& config() const { return config_; }
  const LrdModule& lrd() const { return lrd_; }
  Linear& density_head() { return density_; }
  Linear& illum_head() { return illum_out_; }

 private:
  FieldConfig config_;
  std::vector<Linear> trunk_;  // F_x
  Linear density_;             // F_sigma
  Linear color_hidden_;        // F_c
  Linear color_out_;
  Linear illum_hidden_;        // F_i body
  Linear illum_hidden2_;
  Linear illum_out_;           // F_i head
  LrdModule lrd_;
};

}  // namespace rose::field
