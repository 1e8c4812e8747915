#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "image.hpp"
#include "network.hpp"

namespace flowstyle {

// Activations of one layer, stored map-major: value (pixel i, map j) lives at
// data[j * pixels() + i]. Each map is a row-major height x width plane.
template <typename T>
struct Activation {
  int height = 0;
  int width = 0;
  int maps = 0;
  std::vector<T> data;

  Activation() = default;
  Activation(int h, int w, int j, T fill = T(0))
      : height(h), width(w), maps(j), data(static_cast<std::size_t>(h) * w * j, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  T& at(std::size_t i, int j) { return data[static_cast<std::size_t>(j) * pixels() + i]; }
  T at(std::size_t i, int j) const { return data[static_cast<std::size_t>(j) * pixels() + i]; }
  std::span<T> map(int j) { return {data.data() + static_cast<std::size_t>(j) * pixels(), pixels()}; }
  std::span<const T> map(int j) const {
    return {data.data() + static_cast<std::size_t>(j) * pixels(), pixels()};
  }
  bool same_shape(const Activation& o) const {
    return height == o.height && width == o.width && maps == o.maps;
  }

  friend bool operator==(const Activation&, const Activation&) = default;
};

template <typename T>
using FeatureMapsT = std::map<std::string, Activation<T>>;
using FeatureMaps = FeatureMapsT<float>;
using LayerGrads = FeatureMaps;

// Every intermediate output of one forward run, kept for the reverse pass.
template <typename T>
struct ForwardPass {
  Activation<T> input;                 // mean-subtracted, planar
  std::vector<Activation<T>> outputs;  // outputs[i] is produced by layer i
};

// Runs the chain up to and including layer `last`. Pixels are interleaved
// H x W x C as in ImageTensor.
template <typename T>
ForwardPass<T> run_forward(const Network& net, std::span<const T> pixels, int height, int width,
                           int channels, std::size_t last);

// Activations of exactly the requested layers. Throws UnknownLayer.
FeatureMaps forward(const Network& net, const ImageTensor& image, std::span<const std::string> layers);

template <typename T>
FeatureMapsT<T> forward_pixels(const Network& net, std::span<const T> pixels, int height, int width,
                               int channels, std::span<const std::string> layers);

// Gradient of sum_l <grads[l], F_l(x)> with respect to the image pixels,
// using a cached forward pass that reaches every layer named in `grads`.
ImageTensor backward(const Network& net, const ForwardPass<float>& pass, const LayerGrads& grads);

// Convenience: recomputes the forward pass on `image` first.
ImageTensor backward(const Network& net, const ImageTensor& image, const LayerGrads& grads);

// Deepest layer index among `layers`; throws UnknownLayer for unknown names.
std::size_t deepest_layer(const Network& net, std::span<const std::string> layers);

}  // namespace flowstyle
