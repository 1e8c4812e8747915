#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "features.hpp"
#include "image.hpp"
#include "network.hpp"

namespace flowstyle {

// J x J second-order statistics of one layer, row-major, symmetric.
struct GramMatrix {
  std::string layer;
  int size = 0;
  std::vector<float> values;

  float at(int j, int k) const { return values[static_cast<std::size_t>(j) * size + k]; }
};

// G[j][k] = (1/I) sum_i F[i][j] F[i][k], accumulated in double.
GramMatrix gram(const Activation<float>& features, std::string layer = {});

using StyleTargets = std::map<std::string, GramMatrix>;
using ContentTargets = FeatureMaps;

enum class TemporalKind { Squared, Charbonnier };

struct LossWeights {
  std::map<std::string, float> content;  // per content layer
  std::map<std::string, float> style;    // per style layer
  float tv = 1e-3f;
  float temporal = 0.0f;
  TemporalKind temporal_kind = TemporalKind::Squared;
  float charbonnier_eps = 1e-3f;

  // conv4_2 content at 1, conv1_1..conv5_1 style at 0.2 each, tv 1e-3.
  static LossWeights defaults();
  static LossWeights zero();

  // Throws InvalidArgument on negative or non-finite weights.
  void validate() const;
  std::vector<std::string> content_layers() const;
  std::vector<std::string> style_layers() const;
  // Union of content and style layers with nonzero weight.
  std::vector<std::string> feature_layers() const;
};

struct EnergyBreakdown {
  double content = 0.0;
  double style = 0.0;
  double tv = 0.0;
  double temporal = 0.0;
  double total = 0.0;
};

struct FeatureLoss {
  double value = 0.0;
  LayerGrads grads;  // d loss / d F, per layer
};

struct ImageLoss {
  double value = 0.0;
  ImageTensor grad;
};

FeatureLoss content_loss(const FeatureMaps& features, const ContentTargets& targets, const LossWeights& w);
FeatureLoss style_loss(const FeatureMaps& features, const StyleTargets& targets, const LossWeights& w);
ImageLoss tv_loss(const ImageTensor& image, float weight);
ImageLoss temporal_loss(const ImageTensor& image, const ImageTensor& warped_prev, const Mask& mask,
                        const LossWeights& w);

// A flow-warped neighbour render the image should agree with on `mask`.
struct TemporalTerm {
  ImageTensor warped;
  Mask mask;
};

ContentTargets compute_content_targets(const Network& net, const ImageTensor& content, const LossWeights& w);
StyleTargets compute_style_targets(const Network& net, const ImageTensor& style, const LossWeights& w);

struct EnergyResult {
  EnergyBreakdown breakdown;
  ImageTensor grad;
};

// Full objective and its image gradient. With `with_gradient` false the
// reverse pass is skipped and `grad` stays empty.
EnergyResult total_energy(const Network& net, const ImageTensor& image, const ContentTargets& content,
                          const StyleTargets& style, std::span<const TemporalTerm> temporal,
                          const LossWeights& w, bool with_gradient = true);

// Rescales whole terms so every active term (part > 0) holds at least 5% of
// the rebalanced total at the given breakdown. Throws AllTermsZero.
LossWeights auto_balance_weights(const EnergyBreakdown& initial, const LossWeights& w);

inline constexpr double kMinTermShare = 0.05;

}  // namespace flowstyle
