#include "flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "error.hpp"

namespace flowstyle {

FlowField FlowField::constant(int h, int w, float u, float v) {
  FlowField f(h, w);
  for (std::size_t k = 0; k < f.uv.size(); k += 2) {
    f.uv[k] = u;
    f.uv[k + 1] = v;
  }
  return f;
}

FlowField FlowField::negated() const {
  FlowField out = *this;
  for (float& c : out.uv) c = -c;
  return out;
}

bool FlowField::all_finite() const {
  return std::all_of(uv.begin(), uv.end(), [](float c) { return std::isfinite(c); });
}

namespace {

// Bilinear sample with coordinates clamped into the image.
inline float sample(const ImageTensor& img, float sx, float sy, int c) {
  const int w = img.width();
  const int h = img.height();
  sx = std::clamp(sx, 0.0f, static_cast<float>(w - 1));
  sy = std::clamp(sy, 0.0f, static_cast<float>(h - 1));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const float fx = sx - static_cast<float>(x0);
  const float fy = sy - static_cast<float>(y0);
  const float top = (1.0f - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
  const float bottom = (1.0f - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
  return (1.0f - fy) * top + fy * bottom;
}

void require_same_size(const ImageTensor& img, const FlowField& flow) {
  if (img.height() != flow.height || img.width() != flow.width) {
    fail(ErrorCode::SizeMismatch, "flow field " + std::to_string(flow.width) + "x" + std::to_string(flow.height) +
                                      " does not match image " + std::to_string(img.width()) + "x" +
                                      std::to_string(img.height()));
  }
}

}  // namespace

WarpResult warp(const ImageTensor& image, const FlowField& flow_back) {
  require_same_size(image, flow_back);
  if (!flow_back.all_finite()) fail(ErrorCode::InvalidArgument, "flow field has non-finite vectors");
  const int h = image.height();
  const int w = image.width();
  WarpResult out{ImageTensor(h, w, image.channels()), Mask(h, w, true)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float sx = static_cast<float>(x) + flow_back.u(y, x);
      const float sy = static_cast<float>(y) + flow_back.v(y, x);
      const bool inside = sx >= 0.0f && sy >= 0.0f && sx <= static_cast<float>(w - 1) &&
                          sy <= static_cast<float>(h - 1);
      out.valid.valid[static_cast<std::size_t>(y) * w + x] = inside ? 1 : 0;
      for (int c = 0; c < image.channels(); ++c) out.image.at(y, x, c) = sample(image, sx, sy, c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void HSConfig::validate() const {
  if (!(alpha > 0.0f)) fail(ErrorCode::InvalidArgument, "Horn-Schunck alpha must be > 0");
  if (levels < 1) fail(ErrorCode::InvalidArgument, "pyramid needs at least one level");
  if (iterations < 0) fail(ErrorCode::InvalidArgument, "iteration count must be >= 0");
  if (!(downscale > 0.0f && downscale < 1.0f)) fail(ErrorCode::InvalidArgument, "downscale must be in (0,1)");
}

ImageTensor gaussian_blur(const ImageTensor& image, float sigma) {
  if (sigma <= 0.0f) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  float sum = 0.0f;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5f * static_cast<float>(k * k) / (sigma * sigma));
    sum += kernel[k + radius];
  }
  for (float& k : kernel) k /= sum;
  const int h = image.height();
  const int w = image.width();
  const int ch = image.channels();
  ImageTensor tmp(h, w, ch);
  ImageTensor out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * image.at(y, std::clamp(x + k, 0, w - 1), c);
        tmp.at(y, x, c) = acc;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp.at(std::clamp(y + k, 0, h - 1), x, c);
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

namespace {

// Resamples to (h, w) with pixel-center alignment.
ImageTensor resize(const ImageTensor& img, int h, int w) {
  ImageTensor out(h, w, img.channels());
  const float sy = static_cast<float>(img.height()) / static_cast<float>(h);
  const float sx = static_cast<float>(img.width()) / static_cast<float>(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float py = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
      const float px = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = sample(img, px, py, c);
    }
  }
  return out;
}

FlowField resize_flow(const FlowField& flow, int h, int w) {
  ImageTensor as_image(flow.height, flow.width, 2, flow.uv);
  const ImageTensor scaled = resize(as_image, h, w);
  FlowField out(h, w);
  const float ry = static_cast<float>(h) / static_cast<float>(flow.height);
  const float rx = static_cast<float>(w) / static_cast<float>(flow.width);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.u(y, x) = scaled.at(y, x, 0) * rx;
      out.v(y, x) = scaled.at(y, x, 1) * ry;
    }
  }
  return out;
}

// Refines `flow` at one pyramid level by Jacobi iterations of the
// Horn-Schunck equations linearized around the incoming flow.
void refine_level(const ImageTensor& a, const ImageTensor& b, FlowField& flow, const HSConfig& cfg) {
  const int h = a.height();
  const int w = a.width();
  const WarpResult warped = warp(b, flow);
  const ImageTensor& bw = warped.image;
  std::vector<float> ix(static_cast<std::size_t>(h) * w), iy(ix.size()), rho(ix.size());
  for (int y = 0; y < h; ++y) {
    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
    for (int x = 0; x < w; ++x) {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      const std::size_t k = static_cast<std::size_t>(y) * w + x;
      const float gx = 0.25f * (a.at(y, xp, 0) - a.at(y, xm, 0) + bw.at(y, xp, 0) - bw.at(y, xm, 0));
      const float gy = 0.25f * (a.at(yp, x, 0) - a.at(ym, x, 0) + bw.at(yp, x, 0) - bw.at(ym, x, 0));
      const float gt = bw.at(y, x, 0) - a.at(y, x, 0);
      ix[k] = gx;
      iy[k] = gy;
      rho[k] = gt - gx * flow.u(y, x) - gy * flow.v(y, x);
    }
  }
  const float alpha2 = cfg.alpha * cfg.alpha;
  FlowField next = flow;
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int y = 0; y < h; ++y) {
      const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
      for (int x = 0; x < w; ++x) {
        const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
        const float ubar = (flow.u(ym, x) + flow.u(yp, x) + flow.u(y, xm) + flow.u(y, xp)) / 6.0f +
                           (flow.u(ym, xm) + flow.u(ym, xp) + flow.u(yp, xm) + flow.u(yp, xp)) / 12.0f;
        const float vbar = (flow.v(ym, x) + flow.v(yp, x) + flow.v(y, xm) + flow.v(y, xp)) / 6.0f +
                           (flow.v(ym, xm) + flow.v(ym, xp) + flow.v(yp, xm) + flow.v(yp, xp)) / 12.0f;
        const std::size_t k = static_cast<std::size_t>(y) * w + x;
        const float num = ix[k] * ubar + iy[k] * vbar + rho[k];
        const float den = alpha2 + ix[k] * ix[k] + iy[k] * iy[k];
        next.u(y, x) = ubar - ix[k] * num / den;
        next.v(y, x) = vbar - iy[k] * num / den;
      }
    }
    std::swap(flow, next);
  }
}

}  // namespace

FlowField estimate_flow(const ImageTensor& frame_a, const ImageTensor& frame_b, const HSConfig& cfg) {
  cfg.validate();
  if (!frame_a.same_shape(frame_b)) fail(ErrorCode::SizeMismatch, "flow frames differ in size");
  auto prepare = [&](const ImageTensor& f) {
    ImageTensor lum = to_luminance(f);
    for (float& v : lum.data()) v *= 255.0f;
    return gaussian_blur(lum, cfg.presmooth_sigma);
  };
  std::vector<ImageTensor> pyr_a{prepare(frame_a)};
  std::vector<ImageTensor> pyr_b{prepare(frame_b)};
  const float level_sigma = 0.5f * std::sqrt(1.0f / (cfg.downscale * cfg.downscale) - 1.0f);
  for (int l = 1; l < cfg.levels; ++l) {
    const auto& prev = pyr_a.back();
    const int h = static_cast<int>(std::lround(prev.height() * cfg.downscale));
    const int w = static_cast<int>(std::lround(prev.width() * cfg.downscale));
    if (h < 4 || w < 4) break;
    pyr_a.push_back(resize(gaussian_blur(prev, level_sigma), h, w));
    pyr_b.push_back(resize(gaussian_blur(pyr_b.back(), level_sigma), h, w));
  }

  FlowField flow(pyr_a.back().height(), pyr_a.back().width());
  for (std::size_t l = pyr_a.size(); l-- > 0;) {
    const auto& a = pyr_a[l];
    if (flow.height != a.height() || flow.width != a.width()) flow = resize_flow(flow, a.height(), a.width());
    refine_level(a, pyr_b[l], flow, cfg);
  }
  return flow;
}

FlowField invert_for_warp(const ImageTensor& frame_prev, const ImageTensor& frame_next, const HSConfig& cfg) {
  return estimate_flow(frame_next, frame_prev, cfg);
}

// ---------------------------------------------------------------------------

FlowField read_flo(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) fail(ErrorCode::TruncatedFile, ".flo file shorter than its magic");
  float magic = 0.0f;
  std::memcpy(&magic, bytes.data(), 4);
  if (magic != kFloMagic) fail(ErrorCode::BadMagic, ".flo magic is not 202021.25");
  if (bytes.size() < 12) fail(ErrorCode::TruncatedFile, ".flo header truncated");
  std::int32_t width = 0, height = 0;
  std::memcpy(&width, bytes.data() + 4, 4);
  std::memcpy(&height, bytes.data() + 8, 4);
  if (width <= 0 || height <= 0 || width > (1 << 16) || height > (1 << 16)) {
    fail(ErrorCode::ParseError, ".flo dimensions " + std::to_string(width) + "x" + std::to_string(height) +
                                    " out of range");
  }
  const std::size_t payload = static_cast<std::size_t>(width) * height * 2 * sizeof(float);
  if (bytes.size() - 12 < payload) fail(ErrorCode::TruncatedFile, ".flo payload truncated");
  if (bytes.size() - 12 > payload) fail(ErrorCode::TrailingData, ".flo has bytes after its payload");
  FlowField field(height, width);
  std::memcpy(field.uv.data(), bytes.data() + 12, payload);
  return field;
}

std::vector<std::uint8_t> write_flo(const FlowField& field) {
  std::vector<std::uint8_t> out(12 + field.uv.size() * sizeof(float));
  const std::int32_t width = field.width;
  const std::int32_t height = field.height;
  std::memcpy(out.data(), &kFloMagic, 4);
  std::memcpy(out.data() + 4, &width, 4);
  std::memcpy(out.data() + 8, &height, 4);
  std::memcpy(out.data() + 12, field.uv.data(), field.uv.size() * sizeof(float));
  return out;
}

FlowField read_flo_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return read_flo(bytes);
}

void write_flo_file(const FlowField& field, const std::filesystem::path& path) {
  const auto bytes = write_flo(field);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

// ---------------------------------------------------------------------------

double pair_coherence(const ImageTensor& prev, const ImageTensor& next, const FlowField& flow_back) {
  if (!prev.same_shape(next)) fail(ErrorCode::SizeMismatch, "coherence frames differ in shape");
  const WarpResult w = warp(prev, flow_back);
  const int ch = next.channels();
  double sum = 0.0;
  std::size_t count = 0;
  auto a = w.image.data();
  auto b = next.data();
  for (std::size_t p = 0; p < next.pixel_count(); ++p) {
    if (!w.valid.valid[p]) continue;
    for (int c = 0; c < ch; ++c) {
      const double d = static_cast<double>(a[p * ch + c]) - b[p * ch + c];
      sum += d * d;
    }
    count += static_cast<std::size_t>(ch);
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double coherence_metric(std::span<const ImageTensor> frames, std::span<const FlowField> flows_back) {
  if (frames.empty() || flows_back.size() + 1 != frames.size()) {
    fail(ErrorCode::LengthMismatch, std::to_string(frames.size()) + " frames need " +
                                        std::to_string(frames.empty() ? 0 : frames.size() - 1) + " flows, got " +
                                        std::to_string(flows_back.size()));
  }
  if (frames.size() == 1) return 0.0;
  double sum = 0.0;
  for (std::size_t t = 1; t < frames.size(); ++t) sum += pair_coherence(frames[t - 1], frames[t], flows_back[t - 1]);
  return sum / static_cast<double>(frames.size() - 1);
}

}  // namespace flowstyle
