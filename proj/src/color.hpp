#pragma once

#include <span>
#include <vector>

#include "image.hpp"

namespace flowstyle {

inline constexpr int kDefaultBins = 256;

// Histogram of one channel over [0,1]; values are clamped before binning.
struct ChannelHistogram {
  std::vector<double> counts;
  std::vector<double> cdf;  // nondecreasing, last entry 1

  explicit ChannelHistogram(int bins = kDefaultBins) : counts(static_cast<std::size_t>(bins), 0.0) {}

  int bins() const { return static_cast<int>(counts.size()); }
  void add(const ImageTensor& image, int channel);
  void finalize();
  // Lowest bin whose cumulative mass reaches `mass`.
  int inverse(double mass) const;
};

int bin_of(float value, int bins);

// Per-channel CDF matching of `source` onto `reference`. Each output value is
// the centre of the matched reference bin. Throws ChannelMismatch.
ImageTensor match_histogram(const ImageTensor& source, const ImageTensor& reference, int bins = kDefaultBins);

// One style image per frame: the pooled movie histogram is first matched to
// the style, then the style is matched to each transformed frame. Throws
// EmptySequence.
std::vector<ImageTensor> build_style_movie(const ImageTensor& style, std::span<const ImageTensor> frames,
                                           int bins = kDefaultBins);

}  // namespace flowstyle
