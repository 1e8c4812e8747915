#include "network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "error.hpp"

static_assert(std::endian::native == std::endian::little,
              "weight and flow serialization assume a little-endian host");

namespace flowstyle {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::Pool: return "pool";
  }
  return "?";
}

std::vector<LayerSpec> parse_network_spec(std::string_view text) {
  std::vector<LayerSpec> layers;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    LayerSpec spec;
    std::string kind;
    if (!(fields >> spec.name)) continue;
    if (!(fields >> kind)) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": missing layer kind for " + spec.name);
    }
    if (kind == "conv") {
      spec.kind = LayerKind::Conv;
      if (!(fields >> spec.in_channels >> spec.out_channels >> spec.kernel_h >> spec.kernel_w) ||
          spec.in_channels <= 0 || spec.out_channels <= 0 || spec.kernel_h <= 0 || spec.kernel_w <= 0) {
        fail(ErrorCode::ParseError,
             "line " + std::to_string(line_no) + ": conv " + spec.name + " needs `in out kh kw`");
      }
    } else if (kind == "relu") {
      spec.kind = LayerKind::Relu;
    } else if (kind == "pool") {
      spec.kind = LayerKind::Pool;
    } else {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unknown layer kind '" + kind + "'");
    }
    std::string extra;
    if (fields >> extra) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unexpected token '" + extra + "'");
    }
    for (const auto& prev : layers) {
      if (prev.name == spec.name) fail(ErrorCode::ParseError, "duplicate layer name " + spec.name);
    }
    layers.push_back(spec);
  }
  return layers;
}

std::string format_network_spec(std::span<const LayerSpec> layers) {
  std::ostringstream out;
  out << "# name kind [in out kh kw]\n";
  for (const auto& l : layers) {
    out << l.name << ' ' << to_string(l.kind);
    if (l.kind == LayerKind::Conv) {
      out << ' ' << l.in_channels << ' ' << l.out_channels << ' ' << l.kernel_h << ' ' << l.kernel_w;
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_floats(const std::vector<float>& values) {
    for (float v : values) put(v);
  }
  void put_raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const std::string& context) {
    need(sizeof(T), context);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::vector<float> get_floats(std::size_t n, const std::string& context) {
    if (n > remaining() / sizeof(float)) {
      fail(ErrorCode::TruncatedFile, "truncated data in " + context);
    }
    std::vector<float> out(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return out;
  }
  std::string get_string(std::size_t n, const std::string& context) {
    need(n, context);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const std::string& context) {
    if (remaining() < n) fail(ErrorCode::TruncatedFile, "truncated data in " + context);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

WeightStore read_weights(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 4) fail(ErrorCode::TruncatedFile, "weight file shorter than its header");
  const std::string magic = in.get_string(4, "header");
  if (std::memcmp(magic.data(), kWeightMagic, 4) != 0) {
    fail(ErrorCode::BadMagic, "weight file magic is not NSWT");
  }
  const auto version = in.get<std::uint32_t>("header");
  if (version != kWeightVersion) {
    fail(ErrorCode::VersionUnsupported, "weight file version " + std::to_string(version) + " unsupported");
  }
  const auto count = in.get<std::uint32_t>("header");
  WeightStore store;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string where = "record " + std::to_string(r);
    WeightRecord rec;
    const auto name_len = in.get<std::uint16_t>(where);
    rec.name = in.get_string(name_len, where);
    const std::string ctx = "layer " + rec.name;
    const auto tag = in.get<std::uint8_t>(ctx);
    if (tag > 3) fail(ErrorCode::ParseError, ctx + ": unknown record tag " + std::to_string(tag));
    rec.kind = static_cast<RecordKind>(tag);
    if (rec.kind == RecordKind::Conv) {
      rec.out = in.get<std::uint32_t>(ctx);
      rec.in = in.get<std::uint32_t>(ctx);
      rec.kh = in.get<std::uint32_t>(ctx);
      rec.kw = in.get<std::uint32_t>(ctx);
      const std::uint64_t n = std::uint64_t{rec.out} * rec.in * rec.kh * rec.kw;
      rec.kernel = in.get_floats(n, ctx);
      rec.bias = in.get_floats(rec.out, ctx);
    } else if (rec.kind == RecordKind::InputMean) {
      const auto channels = in.get<std::uint32_t>(ctx);
      rec.means = in.get_floats(channels, ctx);
    }
    store.records.push_back(std::move(rec));
  }
  if (in.remaining() != 0) {
    fail(ErrorCode::TrailingData, std::to_string(in.remaining()) + " bytes after the last of " +
                                      std::to_string(count) + " records");
  }
  return store;
}

std::vector<std::uint8_t> write_weights(const WeightStore& store) {
  ByteWriter out;
  out.put_raw(kWeightMagic, 4);
  out.put(kWeightVersion);
  out.put(static_cast<std::uint32_t>(store.records.size()));
  for (const auto& rec : store.records) {
    if (rec.name.size() > 0xFFFF) fail(ErrorCode::InvalidArgument, "layer name too long");
    out.put(static_cast<std::uint16_t>(rec.name.size()));
    out.put_raw(rec.name.data(), rec.name.size());
    out.put(static_cast<std::uint8_t>(rec.kind));
    if (rec.kind == RecordKind::Conv) {
      if (rec.kernel.size() != std::size_t{rec.out} * rec.in * rec.kh * rec.kw || rec.bias.size() != rec.out) {
        fail(ErrorCode::ShapeMismatch, "layer " + rec.name + ": kernel/bias size disagrees with its shape");
      }
      out.put(rec.out);
      out.put(rec.in);
      out.put(rec.kh);
      out.put(rec.kw);
      out.put_floats(rec.kernel);
      out.put_floats(rec.bias);
    } else if (rec.kind == RecordKind::InputMean) {
      out.put(static_cast<std::uint32_t>(rec.means.size()));
      out.put_floats(rec.means);
    }
  }
  return out.take();
}

WeightStore read_weights_file(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  return read_weights(bytes);
}

void write_weights_file(const WeightStore& store, const std::filesystem::path& path) {
  const auto bytes = write_weights(store);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

// ---------------------------------------------------------------------------

Network::Network(std::vector<LayerSpec> layers, std::vector<std::optional<ConvParams>> params,
                 std::vector<float> input_means)
    : layers_(std::move(layers)), params_(std::move(params)), input_means_(std::move(input_means)) {
  if (layers_.empty()) fail(ErrorCode::ShapeMismatch, "network has no layers");
  if (params_.size() != layers_.size()) fail(ErrorCode::ShapeMismatch, "parameter list length mismatch");
  if (layers_.front().kind != LayerKind::Conv) {
    fail(ErrorCode::ShapeMismatch, "first layer " + layers_.front().name + " must be a convolution");
  }
  input_channels_ = layers_.front().in_channels;
  if (input_means_.empty()) input_means_.assign(static_cast<std::size_t>(input_channels_), 0.0f);
  if (static_cast<int>(input_means_.size()) != input_channels_) {
    fail(ErrorCode::ShapeMismatch, "input means have " + std::to_string(input_means_.size()) +
                                       " channels, layer " + layers_.front().name + " expects " +
                                       std::to_string(input_channels_));
  }
  int channels = input_channels_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.kind == LayerKind::Conv) {
      if (l.in_channels != channels) {
        fail(ErrorCode::ShapeMismatch, "layer " + l.name + " expects " + std::to_string(l.in_channels) +
                                           " input channels but receives " + std::to_string(channels));
      }
      if (!params_[i]) fail(ErrorCode::ShapeMismatch, "layer " + l.name + " has no weights");
      const std::size_t n = static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel_h * l.kernel_w;
      if (params_[i]->kernel.size() != n || params_[i]->bias.size() != static_cast<std::size_t>(l.out_channels)) {
        fail(ErrorCode::ShapeMismatch, "layer " + l.name + " weight arrays do not match its declaration");
      }
      channels = l.out_channels;
    }
    out_channels_.push_back(channels);
  }
}

std::optional<std::size_t> Network::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  return std::nullopt;
}

std::pair<int, int> Network::output_size(std::size_t layer, int height, int width) const {
  for (std::size_t i = 0; i <= layer && i < layers_.size(); ++i) {
    if (layers_[i].kind == LayerKind::Pool) {
      height /= 2;
      width /= 2;
    }
  }
  return {height, width};
}

Network load_network(std::vector<LayerSpec> layers, const WeightStore& weights) {
  std::map<std::string, const WeightRecord*> by_name;
  std::vector<float> means;
  for (const auto& rec : weights.records) {
    if (rec.kind == RecordKind::InputMean) {
      means = rec.means;
      continue;
    }
    const auto it = std::find_if(layers.begin(), layers.end(),
                                 [&](const LayerSpec& l) { return l.name == rec.name; });
    if (it == layers.end()) fail(ErrorCode::UnknownLayer, "weight file has layer " + rec.name + " not in spec");
    if (static_cast<std::uint8_t>(it->kind) != static_cast<std::uint8_t>(rec.kind)) {
      fail(ErrorCode::ShapeMismatch, "layer " + rec.name + " kind differs between spec and weight file");
    }
    by_name[rec.name] = &rec;
  }
  std::vector<std::optional<ConvParams>> params(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind != LayerKind::Conv) continue;
    const auto it = by_name.find(l.name);
    if (it == by_name.end()) fail(ErrorCode::ShapeMismatch, "layer " + l.name + " has no weight record");
    const WeightRecord& rec = *it->second;
    if (rec.out != static_cast<std::uint32_t>(l.out_channels) || rec.in != static_cast<std::uint32_t>(l.in_channels) ||
        rec.kh != static_cast<std::uint32_t>(l.kernel_h) || rec.kw != static_cast<std::uint32_t>(l.kernel_w)) {
      fail(ErrorCode::ShapeMismatch,
           "layer " + l.name + ": spec declares (" + std::to_string(l.out_channels) + "," +
               std::to_string(l.in_channels) + "," + std::to_string(l.kernel_h) + "," +
               std::to_string(l.kernel_w) + ") but weights are (" + std::to_string(rec.out) + "," +
               std::to_string(rec.in) + "," + std::to_string(rec.kh) + "," + std::to_string(rec.kw) + ")");
    }
    params[i] = ConvParams{rec.kernel, rec.bias};
  }
  return Network(std::move(layers), std::move(params), std::move(means));
}

Network load_network(const std::filesystem::path& spec_path, const std::filesystem::path& weight_path) {
  const auto text = slurp(spec_path);
  auto layers = parse_network_spec(std::string_view(reinterpret_cast<const char*>(text.data()), text.size()));
  return load_network(std::move(layers), read_weights_file(weight_path));
}

// ---------------------------------------------------------------------------

std::uint64_t XorShift64Star::next() {
  state_ ^= state_ >> 12;
  state_ ^= state_ << 25;
  state_ ^= state_ >> 27;
  return state_ * 0x2545F4914F6CDD1Dull;
}

float XorShift64Star::next_symmetric() {
  const auto top = static_cast<std::uint32_t>(next() >> 40);
  return static_cast<float>(static_cast<double>(top) / 8388608.0 - 1.0);
}

std::vector<LayerSpec> tiny_vgg_layers() {
  auto conv = [](std::string name, int in, int out) {
    return LayerSpec{std::move(name), LayerKind::Conv, in, out, 3, 3};
  };
  auto relu = [](std::string name) { return LayerSpec{std::move(name), LayerKind::Relu}; };
  auto pool = [](std::string name) { return LayerSpec{std::move(name), LayerKind::Pool}; };
  return {
      conv("conv1_1", 3, 8),   relu("relu1_1"), pool("pool1"),
      conv("conv2_1", 8, 16),  relu("relu2_1"), pool("pool2"),
      conv("conv3_1", 16, 32), relu("relu3_1"),
      conv("conv4_1", 32, 32), relu("relu4_1"),
      conv("conv4_2", 32, 32), relu("relu4_2"),
      conv("conv5_1", 32, 32),
  };
}

WeightStore tiny_vgg_weights() {
  WeightStore store;
  WeightRecord means;
  means.name = "input";
  means.kind = RecordKind::InputMean;
  means.means.assign(3, 0.0f);
  store.records.push_back(std::move(means));

  XorShift64Star rng(kTinyVggSeed);
  for (const auto& l : tiny_vgg_layers()) {
    WeightRecord rec;
    rec.name = l.name;
    rec.kind = static_cast<RecordKind>(l.kind);
    if (l.kind == LayerKind::Conv) {
      rec.out = static_cast<std::uint32_t>(l.out_channels);
      rec.in = static_cast<std::uint32_t>(l.in_channels);
      rec.kh = static_cast<std::uint32_t>(l.kernel_h);
      rec.kw = static_cast<std::uint32_t>(l.kernel_w);
      const float scale = static_cast<float>(std::sqrt(2.0 / (l.in_channels * l.kernel_h * l.kernel_w)));
      rec.kernel.resize(std::size_t{rec.out} * rec.in * rec.kh * rec.kw);
      for (float& w : rec.kernel) w = rng.next_symmetric() * scale;
      rec.bias.resize(rec.out);
      for (float& b : rec.bias) b = rng.next_symmetric() * 0.05f;
    }
    store.records.push_back(std::move(rec));
  }
  return store;
}

Network tiny_vgg() { return load_network(tiny_vgg_layers(), tiny_vgg_weights()); }

}  // namespace flowstyle
