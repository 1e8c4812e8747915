#include "image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "error.hpp"

namespace flowstyle {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TrailingData: return "TrailingData";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::AllTermsZero: return "AllTermsZero";
    case ErrorCode::NonFiniteEnergy: return "NonFiniteEnergy";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingFrame: return "MissingFrame";
    case ErrorCode::FlowUnavailable: return "FlowUnavailable";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

ImageTensor::ImageTensor(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 1) {
    fail(ErrorCode::InvalidArgument, "invalid image dimensions");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels,
                         std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height < 0 || width < 0 || channels < 1 ||
      data_.size() != static_cast<std::size_t>(height) * width * channels) {
    fail(ErrorCode::InvalidArgument,
         "image data length does not match " + std::to_string(height) + "x" +
             std::to_string(width) + "x" + std::to_string(channels));
  }
}

bool ImageTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

ImageTensor ImageTensor::clamped() const {
  ImageTensor out = *this;
  for (float& v : out.data_) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(
      std::count_if(valid.begin(), valid.end(), [](unsigned char v) { return v != 0; }));
}

ImageTensor to_luminance(const ImageTensor& image) {
  if (image.channels() == 1) return image;
  ImageTensor out(image.height(), image.width(), 1);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      out.at(y, x, 0) = 0.299f * image.at(y, x, 0) + 0.587f * image.at(y, x, 1) +
                        0.114f * image.at(y, x, 2);
    }
  }
  return out;
}

double mean_value(const ImageTensor& image) {
  if (image.empty()) return 0.0;
  double sum = 0.0;
  for (float v : image.data()) sum += v;
  return sum / static_cast<double>(image.size());
}

}  // namespace flowstyle

namespace flowstyle {

ImageTensor noise_image(int height, int width, int channels, std::uint64_t seed) {
  ImageTensor out(height, width, channels);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (float& v : out.data()) v = dist(rng);
  return out;
}

}  // namespace flowstyle
