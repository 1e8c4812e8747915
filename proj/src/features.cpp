#include "features.hpp"

#include <algorithm>

#include "error.hpp"

namespace flowstyle {
namespace {

template <typename T>
void conv_forward(const LayerSpec& spec, const ConvParams& params, const Activation<T>& in,
                  Activation<T>& out) {
  const int h = in.height;
  const int w = in.width;
  const int pad_y = (spec.kernel_h - 1) / 2;
  const int pad_x = (spec.kernel_w - 1) / 2;
  out = Activation<T>(h, w, spec.out_channels);
  for (int o = 0; o < spec.out_channels; ++o) {
    auto dst = out.map(o);
    std::fill(dst.begin(), dst.end(), static_cast<T>(params.bias[o]));
    for (int c = 0; c < spec.in_channels; ++c) {
      const auto src = in.map(c);
      for (int ky = 0; ky < spec.kernel_h; ++ky) {
        for (int kx = 0; kx < spec.kernel_w; ++kx) {
          const T wt = static_cast<T>(
              params.kernel[((static_cast<std::size_t>(o) * spec.in_channels + c) * spec.kernel_h + ky) *
                                spec.kernel_w + kx]);
          const int dx = kx - pad_x;
          const int x_lo = std::max(0, -dx);
          const int x_hi = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            const int iy = y + ky - pad_y;
            if (iy < 0 || iy >= h) continue;
            T* drow = dst.data() + static_cast<std::size_t>(y) * w;
            const T* srow = src.data() + static_cast<std::size_t>(iy) * w + dx;
            for (int x = x_lo; x < x_hi; ++x) drow[x] += wt * srow[x];
          }
        }
      }
    }
  }
}

// Transposed convolution: scatters dout back to the layer input.
void conv_backward(const LayerSpec& spec, const ConvParams& params, const Activation<float>& dout,
                   Activation<float>& din) {
  const int h = dout.height;
  const int w = dout.width;
  const int pad_y = (spec.kernel_h - 1) / 2;
  const int pad_x = (spec.kernel_w - 1) / 2;
  din = Activation<float>(h, w, spec.in_channels);
  for (int c = 0; c < spec.in_channels; ++c) {
    auto dst = din.map(c);
    for (int o = 0; o < spec.out_channels; ++o) {
      const auto src = dout.map(o);
      for (int ky = 0; ky < spec.kernel_h; ++ky) {
        for (int kx = 0; kx < spec.kernel_w; ++kx) {
          const float wt =
              params.kernel[((static_cast<std::size_t>(o) * spec.in_channels + c) * spec.kernel_h + ky) *
                                spec.kernel_w + kx];
          const int dx = kx - pad_x;
          const int x_lo = std::max(0, -dx);
          const int x_hi = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            const int iy = y + ky - pad_y;
            if (iy < 0 || iy >= h) continue;
            const float* grow = src.data() + static_cast<std::size_t>(y) * w;
            float* irow = dst.data() + static_cast<std::size_t>(iy) * w + dx;
            for (int x = x_lo; x < x_hi; ++x) irow[x] += wt * grow[x];
          }
        }
      }
    }
  }
}

template <typename T>
void pool_forward(const Activation<T>& in, Activation<T>& out) {
  const int oh = in.height / 2;
  const int ow = in.width / 2;
  out = Activation<T>(oh, ow, in.maps);
  for (int j = 0; j < in.maps; ++j) {
    const auto src = in.map(j);
    auto dst = out.map(j);
    for (int y = 0; y < oh; ++y) {
      const T* r0 = src.data() + static_cast<std::size_t>(2 * y) * in.width;
      const T* r1 = r0 + in.width;
      for (int x = 0; x < ow; ++x) {
        dst[static_cast<std::size_t>(y) * ow + x] =
            (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * T(0.25);
      }
    }
  }
}

void pool_backward(const Activation<float>& dout, int in_h, int in_w, Activation<float>& din) {
  din = Activation<float>(in_h, in_w, dout.maps);
  for (int j = 0; j < dout.maps; ++j) {
    const auto src = dout.map(j);
    auto dst = din.map(j);
    for (int y = 0; y < dout.height; ++y) {
      for (int x = 0; x < dout.width; ++x) {
        const float g = src[static_cast<std::size_t>(y) * dout.width + x] * 0.25f;
        float* r0 = dst.data() + static_cast<std::size_t>(2 * y) * in_w;
        float* r1 = r0 + in_w;
        r0[2 * x] = g;
        r0[2 * x + 1] = g;
        r1[2 * x] = g;
        r1[2 * x + 1] = g;
      }
    }
  }
}

template <typename T>
void relu_forward(const Activation<T>& in, Activation<T>& out) {
  out = in;
  for (T& v : out.data) v = v > T(0) ? v : T(0);
}

}  // namespace

template <typename T>
ForwardPass<T> run_forward(const Network& net, std::span<const T> pixels, int height, int width,
                           int channels, std::size_t last) {
  if (channels != net.input_channels()) {
    fail(ErrorCode::ShapeMismatch, "image has " + std::to_string(channels) + " channels, network expects " +
                                       std::to_string(net.input_channels()));
  }
  if (pixels.size() != static_cast<std::size_t>(height) * width * channels) {
    fail(ErrorCode::ShapeMismatch, "pixel buffer size does not match image dimensions");
  }
  const auto& layers = net.layers();
  const std::size_t reach = std::min(last + 1, layers.size());
  if (reach > 0) {
    const auto [oh, ow] = net.output_size(reach - 1, height, width);
    if (oh < 1 || ow < 1) {
      fail(ErrorCode::ImageTooSmall, std::to_string(height) + "x" + std::to_string(width) +
                                         " image vanishes before layer " + layers[reach - 1].name);
    }
  }
  ForwardPass<T> pass;
  pass.input = Activation<T>(height, width, channels);
  const auto& means = net.input_means();
  const std::size_t n = static_cast<std::size_t>(height) * width;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      pass.input.at(i, c) = pixels[i * channels + c] - static_cast<T>(means[c]);
    }
  }
  pass.outputs.resize(reach);
  for (std::size_t l = 0; l < pass.outputs.size(); ++l) {
    const Activation<T>& in = l == 0 ? pass.input : pass.outputs[l - 1];
    switch (layers[l].kind) {
      case LayerKind::Conv: conv_forward(layers[l], net.conv(l), in, pass.outputs[l]); break;
      case LayerKind::Relu: relu_forward(in, pass.outputs[l]); break;
      case LayerKind::Pool: pool_forward(in, pass.outputs[l]); break;
    }
  }
  return pass;
}

template ForwardPass<float> run_forward(const Network&, std::span<const float>, int, int, int, std::size_t);
template ForwardPass<double> run_forward(const Network&, std::span<const double>, int, int, int, std::size_t);

std::size_t deepest_layer(const Network& net, std::span<const std::string> layers) {
  std::size_t deepest = 0;
  for (const auto& name : layers) {
    const auto idx = net.find(name);
    if (!idx) fail(ErrorCode::UnknownLayer, "unknown layer " + name);
    deepest = std::max(deepest, *idx);
  }
  return deepest;
}

template <typename T>
FeatureMapsT<T> forward_pixels(const Network& net, std::span<const T> pixels, int height, int width,
                               int channels, std::span<const std::string> layers) {
  FeatureMapsT<T> out;
  if (layers.empty()) return out;
  const std::size_t last = deepest_layer(net, layers);
  auto pass = run_forward(net, pixels, height, width, channels, last);
  for (const auto& name : layers) out[name] = pass.outputs[*net.find(name)];
  return out;
}

template FeatureMapsT<float> forward_pixels(const Network&, std::span<const float>, int, int, int,
                                            std::span<const std::string>);
template FeatureMapsT<double> forward_pixels(const Network&, std::span<const double>, int, int, int,
                                             std::span<const std::string>);

FeatureMaps forward(const Network& net, const ImageTensor& image, std::span<const std::string> layers) {
  return forward_pixels<float>(net, image.data(), image.height(), image.width(), image.channels(), layers);
}

ImageTensor backward(const Network& net, const ForwardPass<float>& pass, const LayerGrads& grads) {
  const int height = pass.input.height;
  const int width = pass.input.width;
  const int channels = pass.input.maps;
  ImageTensor result(height, width, channels);
  if (grads.empty()) return result;

  std::vector<std::pair<std::size_t, const Activation<float>*>> upstream;
  for (const auto& [name, g] : grads) {
    const auto idx = net.find(name);
    if (!idx) fail(ErrorCode::UnknownLayer, "unknown layer " + name);
    if (*idx >= pass.outputs.size()) {
      fail(ErrorCode::ShapeMismatch, "layer " + name + " was not reached by the forward pass");
    }
    if (!g.same_shape(pass.outputs[*idx])) {
      fail(ErrorCode::ShapeMismatch, "gradient for layer " + name + " does not match its activation shape");
    }
    upstream.emplace_back(*idx, &g);
  }
  std::size_t top = 0;
  for (const auto& u : upstream) top = std::max(top, u.first);

  const auto& layers = net.layers();
  Activation<float> grad(pass.outputs[top].height, pass.outputs[top].width, pass.outputs[top].maps);
  Activation<float> next;
  for (std::size_t l = top + 1; l-- > 0;) {
    for (const auto& [idx, g] : upstream) {
      if (idx != l) continue;
      for (std::size_t k = 0; k < grad.data.size(); ++k) grad.data[k] += g->data[k];
    }
    const Activation<float>& in = l == 0 ? pass.input : pass.outputs[l - 1];
    switch (layers[l].kind) {
      case LayerKind::Conv:
        conv_backward(layers[l], net.conv(l), grad, next);
        break;
      case LayerKind::Relu:
        next = grad;
        for (std::size_t k = 0; k < next.data.size(); ++k) {
          if (!(in.data[k] > 0.0f)) next.data[k] = 0.0f;
        }
        break;
      case LayerKind::Pool:
        pool_backward(grad, in.height, in.width, next);
        break;
    }
    std::swap(grad, next);
  }
  // Mean subtraction has unit derivative; only the layout changes.
  const std::size_t n = static_cast<std::size_t>(height) * width;
  auto out = result.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) out[i * channels + c] = grad.at(i, c);
  }
  return result;
}

ImageTensor backward(const Network& net, const ImageTensor& image, const LayerGrads& grads) {
  std::size_t last = 0;
  for (const auto& [name, g] : grads) {
    const auto idx = net.find(name);
    if (!idx) fail(ErrorCode::UnknownLayer, "unknown layer " + name);
    last = std::max(last, *idx);
  }
  const auto pass = run_forward<float>(net, image.data(), image.height(), image.width(), image.channels(), last);
  return backward(net, pass, grads);
}

}  // namespace flowstyle
