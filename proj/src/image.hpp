#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace flowstyle {

// H x W x C raster, row-major with interleaved channels. Values nominally
// live in [0,1] but are unconstrained while an image is being optimized.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, float fill = 0.0f);
  ImageTensor(int height, int width, int channels, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * width_;
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& storage() { return data_; }

  bool same_shape(const ImageTensor& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }
  bool all_finite() const;

  // Returns a copy with every value clamped to [0,1].
  ImageTensor clamped() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Per-pixel boolean mask, H x W.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<unsigned char> valid;

  Mask() = default;
  Mask(int h, int w, bool fill) : height(h), width(w), valid(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

  bool at(int y, int x) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

// Rec. 601 luma; single-channel images pass through.
ImageTensor to_luminance(const ImageTensor& image);

double mean_value(const ImageTensor& image);

}  // namespace flowstyle

namespace flowstyle {

// Uniform [0,1) noise, reproducible for a given seed on one platform.
ImageTensor noise_image(int height, int width, int channels, std::uint64_t seed);

}  // namespace flowstyle
