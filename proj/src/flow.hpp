#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "image.hpp"

namespace flowstyle {

// Dense displacement field: pixel p of the source frame moves to p + (u, v)
// in the target frame. Stored as interleaved (u, v) pairs, row-major.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> uv;

  FlowField() = default;
  FlowField(int h, int w) : height(h), width(w), uv(static_cast<std::size_t>(h) * w * 2, 0.0f) {}

  static FlowField constant(int h, int w, float u, float v);

  float& u(int y, int x) { return uv[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float& v(int y, int x) { return uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
  float u(int y, int x) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float v(int y, int x) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }

  FlowField negated() const;
  bool all_finite() const;

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

struct WarpResult {
  ImageTensor image;
  Mask valid;
};

// Backward warp: out(p) = bilinear sample of `image` at p + flow_back(p).
// Samples outside the image are clamped to the border and flagged invalid.
WarpResult warp(const ImageTensor& image, const FlowField& flow_back);

// Coarse-to-fine Horn-Schunck settings.
struct HSConfig {
  float alpha = 15.0f;     // smoothness weight, intensities on a 0..255 scale
  int levels = 3;
  int iterations = 200;    // Jacobi sweeps per level
  float downscale = 0.5f;  // size ratio between pyramid levels
  float presmooth_sigma = 1.0f;

  void validate() const;
};

// Flow taking frame_a toward frame_b, i.e. a(p) ~ b(p + flow(p)).
FlowField estimate_flow(const ImageTensor& frame_a, const ImageTensor& frame_b, const HSConfig& cfg = {});

// Field usable directly as warp()'s flow_back to carry frame_prev content to
// frame_next's geometry: estimates flow from next to prev.
FlowField invert_for_warp(const ImageTensor& frame_prev, const ImageTensor& frame_next, const HSConfig& cfg = {});

// Middlebury .flo serialization.
inline constexpr float kFloMagic = 202021.25f;
FlowField read_flo(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_flo(const FlowField& field);
FlowField read_flo_file(const std::filesystem::path& path);
void write_flo_file(const FlowField& field, const std::filesystem::path& path);

// Masked mean squared difference between warp(prev, flow_back) and next,
// averaged over valid pixels and channels. Returns 0 for an empty mask.
double pair_coherence(const ImageTensor& prev, const ImageTensor& next, const FlowField& flow_back);

// Mean of pair_coherence over adjacent frames; flows_back[t] maps frame t+1
// to frame t. Throws LengthMismatch unless |flows| = |frames| - 1.
double coherence_metric(std::span<const ImageTensor> frames, std::span<const FlowField> flows_back);

// Separable Gaussian blur with clamped borders.
ImageTensor gaussian_blur(const ImageTensor& image, float sigma);

}  // namespace flowstyle
