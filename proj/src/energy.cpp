#include "energy.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "error.hpp"

namespace flowstyle {

GramMatrix gram(const Activation<float>& features, std::string layer) {
  const int maps = features.maps;
  const std::size_t pixels = features.pixels();
  if (pixels == 0) fail(ErrorCode::ShapeMismatch, "gram of layer " + layer + " with no pixels");
  GramMatrix g{std::move(layer), maps, std::vector<float>(static_cast<std::size_t>(maps) * maps)};
  const double inv = 1.0 / static_cast<double>(pixels);
  for (int j = 0; j < maps; ++j) {
    const auto a = features.map(j);
    for (int k = j; k < maps; ++k) {
      const auto b = features.map(k);
      double sum = 0.0;
      for (std::size_t i = 0; i < pixels; ++i) sum += static_cast<double>(a[i]) * b[i];
      const auto v = static_cast<float>(sum * inv);
      g.values[static_cast<std::size_t>(j) * maps + k] = v;
      g.values[static_cast<std::size_t>(k) * maps + j] = v;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

LossWeights LossWeights::defaults() {
  LossWeights w;
  w.content["conv4_2"] = 1.0f;
  for (const char* name : {"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"}) w.style[name] = 0.2f;
  return w;
}

LossWeights LossWeights::zero() {
  LossWeights w;
  w.tv = 0.0f;
  return w;
}

void LossWeights::validate() const {
  auto check = [](float v, const std::string& what) {
    if (!std::isfinite(v) || v < 0.0f) fail(ErrorCode::InvalidArgument, "weight " + what + " must be finite and >= 0");
  };
  for (const auto& [name, v] : content) check(v, "content." + name);
  for (const auto& [name, v] : style) check(v, "style." + name);
  check(tv, "tv");
  check(temporal, "temporal");
  if (!(charbonnier_eps > 0.0f) || !std::isfinite(charbonnier_eps)) {
    fail(ErrorCode::InvalidArgument, "charbonnier epsilon must be > 0");
  }
}

namespace {
std::vector<std::string> active_names(const std::map<std::string, float>& m) {
  std::vector<std::string> out;
  for (const auto& [name, v] : m) {
    if (v != 0.0f) out.push_back(name);
  }
  return out;
}
}  // namespace

std::vector<std::string> LossWeights::content_layers() const { return active_names(content); }
std::vector<std::string> LossWeights::style_layers() const { return active_names(style); }

std::vector<std::string> LossWeights::feature_layers() const {
  auto out = content_layers();
  for (auto& name : style_layers()) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const Activation<float>& require_layer(const FeatureMaps& features, const std::string& name) {
  const auto it = features.find(name);
  if (it == features.end()) fail(ErrorCode::ShapeMismatch, "features missing layer " + name);
  return it->second;
}

void add_grad(LayerGrads& grads, const std::string& name, Activation<float> g) {
  auto [it, inserted] = grads.try_emplace(name, std::move(g));
  if (!inserted) {
    for (std::size_t k = 0; k < g.data.size(); ++k) it->second.data[k] += g.data[k];
  }
}

}  // namespace

FeatureLoss content_loss(const FeatureMaps& features, const ContentTargets& targets, const LossWeights& w) {
  FeatureLoss out;
  for (const auto& [name, lambda] : w.content) {
    if (lambda == 0.0f) continue;
    const auto& f = require_layer(features, name);
    const auto it = targets.find(name);
    if (it == targets.end()) fail(ErrorCode::ShapeMismatch, "no content target for layer " + name);
    const auto& target = it->second;
    if (!f.same_shape(target)) fail(ErrorCode::ShapeMismatch, "content target shape differs at layer " + name);
    const double norm = static_cast<double>(f.pixels()) * f.maps;
    const double scale = lambda / norm;
    Activation<float> g(f.height, f.width, f.maps);
    double sum = 0.0;
    for (std::size_t k = 0; k < f.data.size(); ++k) {
      const double d = static_cast<double>(f.data[k]) - target.data[k];
      sum += d * d;
      g.data[k] = static_cast<float>(2.0 * scale * d);
    }
    out.value += scale * sum;
    add_grad(out.grads, name, std::move(g));
  }
  return out;
}

FeatureLoss style_loss(const FeatureMaps& features, const StyleTargets& targets, const LossWeights& w) {
  FeatureLoss out;
  for (const auto& [name, lambda] : w.style) {
    if (lambda == 0.0f) continue;
    const auto& f = require_layer(features, name);
    const auto it = targets.find(name);
    if (it == targets.end()) fail(ErrorCode::ShapeMismatch, "no style target for layer " + name);
    const GramMatrix& target = it->second;
    if (target.size != f.maps) fail(ErrorCode::ShapeMismatch, "style target size differs at layer " + name);
    const GramMatrix g = gram(f, name);
    const int maps = f.maps;
    const double j2 = static_cast<double>(maps) * maps;

    std::vector<float> diff(g.values.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < diff.size(); ++k) {
      const double d = static_cast<double>(g.values[k]) - target.values[k];
      sum += d * d;
      diff[k] = static_cast<float>(d);
    }
    out.value += lambda * sum / j2;

    // dL/dF = 4 lambda / (J^2 I) * F (G - G_target)
    const auto coef = static_cast<float>(4.0 * lambda / (j2 * static_cast<double>(f.pixels())));
    Activation<float> grad(f.height, f.width, maps);
    for (int j = 0; j < maps; ++j) {
      auto dst = grad.map(j);
      for (int k = 0; k < maps; ++k) {
        const float c = coef * diff[static_cast<std::size_t>(k) * maps + j];
        if (c == 0.0f) continue;
        const auto src = f.map(k);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
      }
    }
    add_grad(out.grads, name, std::move(grad));
  }
  return out;
}

ImageLoss tv_loss(const ImageTensor& image, float weight) {
  const int h = image.height();
  const int wd = image.width();
  const int ch = image.channels();
  if (h < 2 || wd < 2) fail(ErrorCode::ImageTooSmall, "total variation needs at least a 2x2 image");
  ImageLoss out{0.0, ImageTensor(h, wd, ch)};
  if (weight == 0.0f) return out;
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wd; ++x) {
      for (int c = 0; c < ch; ++c) {
        const float v = image.at(y, x, c);
        if (y + 1 < h) {
          const float d = image.at(y + 1, x, c) - v;
          sum += static_cast<double>(d) * d;
          out.grad.at(y + 1, x, c) += 2.0f * weight * d;
          out.grad.at(y, x, c) -= 2.0f * weight * d;
        }
        if (x + 1 < wd) {
          const float d = image.at(y, x + 1, c) - v;
          sum += static_cast<double>(d) * d;
          out.grad.at(y, x + 1, c) += 2.0f * weight * d;
          out.grad.at(y, x, c) -= 2.0f * weight * d;
        }
      }
    }
  }
  out.value = weight * sum;
  return out;
}

ImageLoss temporal_loss(const ImageTensor& image, const ImageTensor& warped_prev, const Mask& mask,
                        const LossWeights& w) {
  if (!image.same_shape(warped_prev) || mask.height != image.height() || mask.width != image.width()) {
    fail(ErrorCode::ShapeMismatch, "temporal loss operands differ in shape");
  }
  const std::size_t masked = mask.count();
  if (masked == 0) fail(ErrorCode::EmptyMask, "warp left no valid pixels");
  ImageLoss out{0.0, ImageTensor(image.height(), image.width(), image.channels())};
  const int ch = image.channels();
  const double scale = static_cast<double>(w.temporal) / static_cast<double>(masked);
  const double eps = w.charbonnier_eps;
  auto x = image.data();
  auto y = warped_prev.data();
  auto g = out.grad.data();
  double sum = 0.0;
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    if (!mask.valid[p]) continue;
    for (int c = 0; c < ch; ++c) {
      const std::size_t k = p * ch + c;
      const double d = static_cast<double>(x[k]) - y[k];
      if (w.temporal_kind == TemporalKind::Squared) {
        sum += d * d;
        g[k] = static_cast<float>(scale * 2.0 * d);
      } else {
        const double r = std::sqrt(d * d + eps * eps);
        sum += r - eps;
        g[k] = static_cast<float>(scale * d / r);
      }
    }
  }
  out.value = scale * sum;
  return out;
}

ContentTargets compute_content_targets(const Network& net, const ImageTensor& content, const LossWeights& w) {
  return forward(net, content, w.content_layers());
}

StyleTargets compute_style_targets(const Network& net, const ImageTensor& style, const LossWeights& w) {
  const auto layers = w.style_layers();
  const auto features = forward(net, style, layers);
  StyleTargets targets;
  for (const auto& name : layers) targets[name] = gram(features.at(name), name);
  return targets;
}

EnergyResult total_energy(const Network& net, const ImageTensor& image, const ContentTargets& content,
                          const StyleTargets& style, std::span<const TemporalTerm> temporal,
                          const LossWeights& w, bool with_gradient) {
  EnergyResult result;
  const auto layers = w.feature_layers();
  LayerGrads grads;
  ForwardPass<float> pass;
  if (!layers.empty()) {
    pass = run_forward<float>(net, image.data(), image.height(), image.width(), image.channels(),
                              deepest_layer(net, layers));
    FeatureMaps features;
    for (const auto& name : layers) features.emplace(name, pass.outputs[*net.find(name)]);
    auto c = content_loss(features, content, w);
    auto s = style_loss(features, style, w);
    result.breakdown.content = c.value;
    result.breakdown.style = s.value;
    grads = std::move(c.grads);
    for (auto& [name, g] : s.grads) add_grad(grads, name, std::move(g));
  }

  ImageTensor grad(image.height(), image.width(), image.channels());
  if (with_gradient && !grads.empty()) grad = backward(net, pass, grads);
  auto accumulate = [&](const ImageTensor& g) {
    auto dst = grad.data();
    auto src = g.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  };

  if (w.tv != 0.0f) {
    auto tv = tv_loss(image, w.tv);
    result.breakdown.tv = tv.value;
    if (with_gradient) accumulate(tv.grad);
  }
  if (w.temporal != 0.0f) {
    for (const auto& term : temporal) {
      auto t = temporal_loss(image, term.warped, term.mask, w);
      result.breakdown.temporal += t.value;
      if (with_gradient) accumulate(t.grad);
    }
  }
  auto& b = result.breakdown;
  b.total = b.content + b.style + b.tv + b.temporal;
  if (with_gradient) result.grad = std::move(grad);
  return result;
}

LossWeights auto_balance_weights(const EnergyBreakdown& initial, const LossWeights& w) {
  const std::array<double, 4> parts{initial.content, initial.style, initial.tv, initial.temporal};
  for (double p : parts) {
    if (!std::isfinite(p) || p < 0.0) fail(ErrorCode::InvalidArgument, "breakdown parts must be finite and >= 0");
  }
  if (std::none_of(parts.begin(), parts.end(), [](double p) { return p > 0.0; })) {
    fail(ErrorCode::AllTermsZero, "no active energy term to balance");
  }
  // Raised terms are pinned slightly above the floor so recomputation in
  // single precision still clears it.
  const double pinned = kMinTermShare * (1.0 + 1e-4);
  std::array<bool, 4> raised{};
  double total = parts[0] + parts[1] + parts[2] + parts[3];
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (parts[k] > 0.0 && !raised[k] && parts[k] < kMinTermShare * total) {
        raised[k] = true;
        changed = true;
      }
    }
    if (changed) {
      double rest = 0.0;
      int count = 0;
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (raised[k]) {
          ++count;
        } else {
          rest += parts[k];
        }
      }
      total = rest / (1.0 - pinned * count);
    }
  }

  LossWeights out = w;
  auto factor = [&](std::size_t k) { return static_cast<float>(pinned * total / parts[k]); };
  if (raised[0]) {
    for (auto& [name, v] : out.content) v *= factor(0);
  }
  if (raised[1]) {
    for (auto& [name, v] : out.style) v *= factor(1);
  }
  if (raised[2]) out.tv *= factor(2);
  if (raised[3]) out.temporal *= factor(3);
  return out;
}

}  // namespace flowstyle
