#include "color.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace flowstyle {

int bin_of(float value, int bins) {
  const float v = std::clamp(value, 0.0f, 1.0f);
  return std::min(static_cast<int>(v * static_cast<float>(bins)), bins - 1);
}

void ChannelHistogram::add(const ImageTensor& image, int channel) {
  const int n = bins();
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    counts[static_cast<std::size_t>(bin_of(image.data()[p * image.channels() + channel], n))] += 1.0;
  }
}

void ChannelHistogram::finalize() {
  cdf.assign(counts.size(), 0.0);
  double total = 0.0;
  for (double c : counts) total += c;
  double running = 0.0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    running += counts[b];
    cdf[b] = total > 0.0 ? running / total : 0.0;
  }
  if (total > 0.0) cdf.back() = 1.0;
}

int ChannelHistogram::inverse(double mass) const {
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), mass);
  if (it == cdf.end()) return bins() - 1;
  return static_cast<int>(it - cdf.begin());
}

namespace {

// Per-bin lookup table source bin -> output value.
std::vector<float> matching_table(const ChannelHistogram& source, const ChannelHistogram& reference) {
  const int bins = source.bins();
  std::vector<float> table(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    const int r = reference.inverse(source.cdf[static_cast<std::size_t>(b)]);
    table[static_cast<std::size_t>(b)] = (static_cast<float>(r) + 0.5f) / static_cast<float>(bins);
  }
  return table;
}

void apply_table(ImageTensor& image, int channel, const std::vector<float>& table) {
  const int bins = static_cast<int>(table.size());
  auto data = image.data();
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    float& v = data[p * image.channels() + channel];
    v = table[static_cast<std::size_t>(bin_of(v, bins))];
  }
}

void check_bins(int bins) {
  if (bins < 2) fail(ErrorCode::InvalidArgument, "histogram needs at least two bins");
}

}  // namespace

ImageTensor match_histogram(const ImageTensor& source, const ImageTensor& reference, int bins) {
  check_bins(bins);
  if (source.channels() != reference.channels()) {
    fail(ErrorCode::ChannelMismatch, "histogram matching needs equal channel counts");
  }
  ImageTensor out = source;
  for (int c = 0; c < source.channels(); ++c) {
    ChannelHistogram hs(bins), hr(bins);
    hs.add(source, c);
    hr.add(reference, c);
    hs.finalize();
    hr.finalize();
    apply_table(out, c, matching_table(hs, hr));
  }
  return out;
}

std::vector<ImageTensor> build_style_movie(const ImageTensor& style, std::span<const ImageTensor> frames, int bins) {
  check_bins(bins);
  if (frames.empty()) fail(ErrorCode::EmptySequence, "style movie needs at least one frame");
  for (const auto& f : frames) {
    if (f.channels() != style.channels()) fail(ErrorCode::ChannelMismatch, "frame and style channel counts differ");
  }
  std::vector<ImageTensor> transformed(frames.begin(), frames.end());
  for (int c = 0; c < style.channels(); ++c) {
    ChannelHistogram pooled(bins), hs(bins);
    for (const auto& f : frames) pooled.add(f, c);
    hs.add(style, c);
    pooled.finalize();
    hs.finalize();
    const auto table = matching_table(pooled, hs);
    for (auto& f : transformed) apply_table(f, c, table);
  }
  std::vector<ImageTensor> out;
  out.reserve(frames.size());
  for (const auto& f : transformed) out.push_back(match_histogram(style, f, bins));
  return out;
}

}  // namespace flowstyle
