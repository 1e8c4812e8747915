#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowstyle {

enum class LayerKind : std::uint8_t { Conv = 0, Relu = 1, Pool = 2 };

const char* to_string(LayerKind kind);

// One node of the linear feature chain. Convolutions are stride 1 with
// same (zero) padding; pools are 2x2 average pools with stride 2.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  int in_channels = 0;   // conv only
  int out_channels = 0;  // conv only
  int kernel_h = 0;      // conv only
  int kernel_w = 0;      // conv only

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Parses the plain-text network description: one layer per line,
// `name kind args`, where conv takes `in out kh kw`. '#' starts a comment.
std::vector<LayerSpec> parse_network_spec(std::string_view text);
std::string format_network_spec(std::span<const LayerSpec> layers);

// ---------------------------------------------------------------------------
// Binary weight file ("NSWT", version 1, little-endian).

enum class RecordKind : std::uint8_t { Conv = 0, Relu = 1, Pool = 2, InputMean = 3 };

struct WeightRecord {
  std::string name;
  RecordKind kind = RecordKind::Conv;
  // conv: (out, in, kh, kw)
  std::uint32_t out = 0, in = 0, kh = 0, kw = 0;
  std::vector<float> kernel;
  std::vector<float> bias;
  // input-mean
  std::vector<float> means;

  friend bool operator==(const WeightRecord&, const WeightRecord&) = default;
};

struct WeightStore {
  std::vector<WeightRecord> records;

  friend bool operator==(const WeightStore&, const WeightStore&) = default;
};

inline constexpr char kWeightMagic[4] = {'N', 'S', 'W', 'T'};
inline constexpr std::uint32_t kWeightVersion = 1;

WeightStore read_weights(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_weights(const WeightStore& store);
WeightStore read_weights_file(const std::filesystem::path& path);
void write_weights_file(const WeightStore& store, const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct ConvParams {
  std::vector<float> kernel;  // (out, in, kh, kw)
  std::vector<float> bias;    // out
};

// Immutable after construction. Layer i of `layers()` owns `conv(i)` when it
// is a convolution.
class Network {
 public:
  Network(std::vector<LayerSpec> layers, std::vector<std::optional<ConvParams>> params,
          std::vector<float> input_means);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  int input_channels() const { return input_channels_; }
  const std::vector<float>& input_means() const { return input_means_; }
  const ConvParams& conv(std::size_t layer) const { return *params_[layer]; }

  // Index of the named layer, or nullopt.
  std::optional<std::size_t> find(std::string_view name) const;
  // Channel count produced by layer i.
  int output_channels(std::size_t layer) const { return out_channels_[layer]; }
  // Spatial size produced by layer i for an input of the given size.
  std::pair<int, int> output_size(std::size_t layer, int height, int width) const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<std::optional<ConvParams>> params_;
  std::vector<float> input_means_;
  std::vector<int> out_channels_;
  int input_channels_ = 0;
};

// Validates the weight store against the layer list and assembles a Network.
// Throws ShapeMismatch / UnknownLayer naming the offending layer.
Network load_network(std::vector<LayerSpec> layers, const WeightStore& weights);
Network load_network(const std::filesystem::path& spec_path,
                     const std::filesystem::path& weight_path);

// ---------------------------------------------------------------------------
// tiny-vgg: the deterministic in-repo network used by every test.

std::vector<LayerSpec> tiny_vgg_layers();
WeightStore tiny_vgg_weights();
Network tiny_vgg();

// xorshift64* generator used for the seeded tiny-vgg weights.
class XorShift64Star {
 public:
  explicit XorShift64Star(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform in [-1, 1) from the top 24 bits of next().
  float next_symmetric();

 private:
  std::uint64_t state_;
};

inline constexpr std::uint64_t kTinyVggSeed = 0x5EEDCAFEull;

}  // namespace flowstyle
