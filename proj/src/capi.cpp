#include "flowstyle/flowstyle.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <new>
#include <string>
#include <vector>

#include "color.hpp"
#include "error.hpp"
#include "flow.hpp"
#include "image_io.hpp"
#include "job.hpp"
#include "json.hpp"
#include "network.hpp"
#include "optim.hpp"
#include "pipeline.hpp"

struct fs_image {
  flowstyle::ImageTensor value;
};
struct fs_network {
  flowstyle::Network value;
};
struct fs_flow {
  flowstyle::FlowField value;
};
struct fs_weights {
  flowstyle::LossWeights value;
};

namespace {

thread_local std::string last_error;

fs_status set_error(fs_status status, const std::string& message) {
  last_error = message;
  return status;
}

// Runs `fn`, translating exceptions into status codes.
template <typename Fn>
fs_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return FS_OK;
  } catch (const flowstyle::Error& e) {
    return set_error(static_cast<fs_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(FS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(FS_ERR_INTERNAL, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) flowstyle::fail(flowstyle::ErrorCode::InvalidArgument, what);
}

std::vector<flowstyle::ImageTensor> gather(const fs_image* const* frames, size_t count) {
  require(frames != nullptr || count == 0, "frame array is null");
  std::vector<flowstyle::ImageTensor> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    require(frames[i] != nullptr, "frame handle is null");
    out.push_back(frames[i]->value);
  }
  return out;
}

flowstyle::HSConfig to_config(const fs_hs_config* cfg) {
  flowstyle::HSConfig out;
  if (cfg) {
    out.alpha = cfg->alpha;
    out.levels = cfg->levels;
    out.iterations = cfg->iterations;
    out.downscale = cfg->downscale;
  }
  return out;
}

fs_energy to_energy(const flowstyle::EnergyBreakdown& b) { return {b.content, b.style, b.tv, b.temporal, b.total}; }

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* fs_version(void) { return FLOWSTYLE_VERSION; }

const char* fs_last_error(void) { return last_error.c_str(); }

const char* fs_status_name(fs_status status) {
  if (status == FS_OK) return "Ok";
  if (status == FS_ERR_INTERNAL) return "Internal";
  return flowstyle::to_string(static_cast<flowstyle::ErrorCode>(status));
}

void fs_string_free(char* s) { std::free(s); }

// ---- images ---------------------------------------------------------------

fs_status fs_image_create(int height, int width, int channels, const float* data, fs_image** out) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    require(height > 0 && width > 0 && (channels == 1 || channels == 3), "image must be HxWx1 or HxWx3");
    flowstyle::ImageTensor img(height, width, channels);
    if (data) std::memcpy(img.data().data(), data, img.size() * sizeof(float));
    require(img.all_finite(), "image data must be finite");
    *out = new fs_image{std::move(img)};
  });
}

fs_status fs_image_noise(int height, int width, int channels, uint64_t seed, fs_image** out) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    require(height > 0 && width > 0 && (channels == 1 || channels == 3), "image must be HxWx1 or HxWx3");
    *out = new fs_image{flowstyle::noise_image(height, width, channels, seed)};
  });
}

fs_status fs_image_load(const char* path, fs_image** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    *out = new fs_image{flowstyle::read_image(path)};
  });
}

fs_status fs_image_save(const fs_image* image, const char* path) {
  return guarded([&] {
    require(image != nullptr && path != nullptr, "null argument");
    flowstyle::write_image(image->value, path);
  });
}

int fs_image_height(const fs_image* image) { return image ? image->value.height() : 0; }
int fs_image_width(const fs_image* image) { return image ? image->value.width() : 0; }
int fs_image_channels(const fs_image* image) { return image ? image->value.channels() : 0; }
const float* fs_image_data(const fs_image* image) { return image ? image->value.data().data() : nullptr; }
void fs_image_destroy(fs_image* image) { delete image; }

fs_status fs_frames_load(const char* dir, fs_image*** out, size_t* count) {
  return guarded([&] {
    require(dir != nullptr && out != nullptr && count != nullptr, "null argument");
    const auto paths = flowstyle::list_frames(dir);
    std::vector<flowstyle::ImageTensor> frames;
    for (const auto& p : paths) frames.push_back(flowstyle::read_image(p));
    auto** arr = static_cast<fs_image**>(std::calloc(frames.size(), sizeof(fs_image*)));
    if (!arr) throw std::bad_alloc();
    for (size_t i = 0; i < frames.size(); ++i) arr[i] = new fs_image{std::move(frames[i])};
    *out = arr;
    *count = frames.size();
  });
}

fs_status fs_frames_save(const fs_image* const* images, size_t count, const char* dir, const char* ext) {
  return guarded([&] {
    require(dir != nullptr && ext != nullptr, "null argument");
    const auto frames = gather(images, count);
    std::filesystem::create_directories(dir);
    for (size_t t = 0; t < frames.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%05zu", t);
      flowstyle::write_image(frames[t], std::filesystem::path(dir) / (std::string(name) + ext));
    }
  });
}

void fs_image_array_free(fs_image** images, size_t count) {
  if (!images) return;
  for (size_t i = 0; i < count; ++i) delete images[i];
  std::free(images);
}

// ---- network --------------------------------------------------------------

fs_status fs_network_tiny_vgg(fs_network** out) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    *out = new fs_network{flowstyle::tiny_vgg()};
  });
}

fs_status fs_network_load(const char* spec_path, const char* weights_path, fs_network** out) {
  return guarded([&] {
    require(spec_path != nullptr && weights_path != nullptr && out != nullptr, "null argument");
    *out = new fs_network{flowstyle::load_network(spec_path, weights_path)};
  });
}

fs_status fs_network_write_tiny_vgg(const char* spec_path, const char* weights_path) {
  return guarded([&] {
    require(spec_path != nullptr && weights_path != nullptr, "null argument");
    std::ofstream spec(spec_path);
    if (!spec) flowstyle::fail(flowstyle::ErrorCode::Io, std::string("cannot write ") + spec_path);
    spec << flowstyle::format_network_spec(flowstyle::tiny_vgg_layers());
    spec.close();
    flowstyle::write_weights_file(flowstyle::tiny_vgg_weights(), weights_path);
  });
}

size_t fs_network_layer_count(const fs_network* net) { return net ? net->value.layer_count() : 0; }

const char* fs_network_layer_name(const fs_network* net, size_t index) {
  if (!net || index >= net->value.layer_count()) return "";
  return net->value.layers()[index].name.c_str();
}

fs_layer_kind fs_network_layer_kind(const fs_network* net, size_t index) {
  if (!net || index >= net->value.layer_count()) return FS_LAYER_CONV;
  return static_cast<fs_layer_kind>(net->value.layers()[index].kind);
}

fs_status fs_network_layer_shape(const fs_network* net, size_t index, int shape[4]) {
  return guarded([&] {
    require(net != nullptr && shape != nullptr, "null argument");
    require(index < net->value.layer_count(), "layer index out of range");
    const auto& l = net->value.layers()[index];
    shape[0] = l.out_channels;
    shape[1] = l.in_channels;
    shape[2] = l.kernel_h;
    shape[3] = l.kernel_w;
  });
}

int fs_network_input_channels(const fs_network* net) { return net ? net->value.input_channels() : 0; }
void fs_network_destroy(fs_network* net) { delete net; }

// ---- weights --------------------------------------------------------------

fs_status fs_weights_default(fs_weights** out) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    *out = new fs_weights{flowstyle::LossWeights::defaults()};
  });
}

fs_status fs_weights_set_content(fs_weights* w, const char* layer, float value) {
  return guarded([&] {
    require(w != nullptr && layer != nullptr, "null argument");
    auto next = w->value;
    next.content[layer] = value;
    next.validate();
    w->value = std::move(next);
  });
}

fs_status fs_weights_set_style(fs_weights* w, const char* layer, float value) {
  return guarded([&] {
    require(w != nullptr && layer != nullptr, "null argument");
    auto next = w->value;
    next.style[layer] = value;
    next.validate();
    w->value = std::move(next);
  });
}

fs_status fs_weights_clear(fs_weights* w) {
  return guarded([&] {
    require(w != nullptr, "null argument");
    w->value = flowstyle::LossWeights::zero();
  });
}

fs_status fs_weights_set_tv(fs_weights* w, float value) {
  return guarded([&] {
    require(w != nullptr, "null argument");
    auto next = w->value;
    next.tv = value;
    next.validate();
    w->value = std::move(next);
  });
}

fs_status fs_weights_set_temporal(fs_weights* w, float value, fs_temporal_kind kind, float epsilon) {
  return guarded([&] {
    require(w != nullptr, "null argument");
    auto next = w->value;
    next.temporal = value;
    next.temporal_kind =
        kind == FS_TEMPORAL_CHARBONNIER ? flowstyle::TemporalKind::Charbonnier : flowstyle::TemporalKind::Squared;
    next.charbonnier_eps = epsilon;
    next.validate();
    w->value = std::move(next);
  });
}

fs_status fs_weights_to_json(const fs_weights* w, char** out) {
  return guarded([&] {
    require(w != nullptr && out != nullptr, "null argument");
    // Shortest decimal that reads back as the same float.
    auto num = [](float v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9g", v);
      for (int digits = 1; digits <= 9; ++digits) {
        char trial[32];
        std::snprintf(trial, sizeof trial, "%.*g", digits, v);
        if (std::strtof(trial, nullptr) == v) return std::strtod(trial, nullptr);
      }
      return std::strtod(buf, nullptr);
    };
    nlohmann::json j;
    j["content"] = nlohmann::json::object();
    for (const auto& [name, v] : w->value.content) j["content"][name] = num(v);
    j["style"] = nlohmann::json::object();
    for (const auto& [name, v] : w->value.style) j["style"][name] = num(v);
    j["tv"] = num(w->value.tv);
    j["temporal"] = num(w->value.temporal);
    j["temporal_kind"] = w->value.temporal_kind == flowstyle::TemporalKind::Squared ? "squared" : "charbonnier";
    j["charbonnier_eps"] = num(w->value.charbonnier_eps);
    *out = dup_string(j.dump(2));
  });
}

fs_status fs_weights_apply_json(fs_weights* w, const char* json_text) {
  return guarded([&] {
    require(w != nullptr && json_text != nullptr, "null argument");
    auto next = flowstyle::parse_loss_weights(json_text, w->value);
    next.validate();
    w->value = std::move(next);
  });
}

void fs_weights_destroy(fs_weights* w) { delete w; }

// ---- rendering ------------------------------------------------------------

void fs_render_options_default(fs_render_options* options) {
  if (!options) return;
  const flowstyle::TransferOptions defaults;
  options->iterations = defaults.iterations;
  options->step_size = defaults.adam.step_size;
  options->auto_balance = defaults.auto_balance ? 1 : 0;
  options->init = FS_INIT_CONTENT;
  options->seed = 0;
}

fs_status fs_render_image(const fs_network* net, const fs_image* content, const fs_image* style,
                          const fs_weights* weights, const fs_render_options* options, fs_image** out,
                          fs_energy* start, fs_energy* end) {
  return guarded([&] {
    require(net && content && style && out, "null argument");
    fs_render_options opts;
    fs_render_options_default(&opts);
    if (options) opts = *options;
    const auto w = weights ? weights->value : flowstyle::LossWeights::defaults();
    flowstyle::TransferOptions transfer;
    transfer.iterations = opts.iterations;
    transfer.adam.step_size = opts.step_size;
    transfer.auto_balance = opts.auto_balance != 0;
    const auto& c = content->value;
    const auto init = opts.init == FS_INIT_NOISE ? flowstyle::noise_image(c.height(), c.width(), c.channels(), opts.seed)
                                                 : c;
    const auto targets = flowstyle::compute_style_targets(net->value, style->value, w);
    auto result = flowstyle::style_transfer(net->value, init, c, targets, w, transfer);
    if (result.report.termination == flowstyle::Termination::NonFiniteEnergy) {
      flowstyle::fail(flowstyle::ErrorCode::NonFiniteEnergy,
                      "energy became non-finite after " + std::to_string(result.report.iterations) + " iterations");
    }
    if (start) *start = to_energy(result.start);
    if (end) *end = to_energy(result.end);
    *out = new fs_image{result.image.clamped()};
  });
}

fs_status fs_render_video(const char* job_json, const char* base_dir, double* coherence) {
  return guarded([&] {
    require(job_json != nullptr, "null job");
    const auto job = flowstyle::parse_render_job(job_json, base_dir ? base_dir : "");
    const auto outcome = flowstyle::render_video(job);
    if (coherence) *coherence = outcome.result.coherence;
  });
}

// ---- flow -----------------------------------------------------------------

void fs_hs_config_default(fs_hs_config* cfg) {
  if (!cfg) return;
  const flowstyle::HSConfig d;
  cfg->alpha = d.alpha;
  cfg->levels = d.levels;
  cfg->iterations = d.iterations;
  cfg->downscale = d.downscale;
}

fs_status fs_flow_create(int height, int width, const float* uv, fs_flow** out) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    require(height > 0 && width > 0, "flow dimensions must be positive");
    flowstyle::FlowField f(height, width);
    if (uv) std::memcpy(f.uv.data(), uv, f.uv.size() * sizeof(float));
    require(f.all_finite(), "flow vectors must be finite");
    *out = new fs_flow{std::move(f)};
  });
}

fs_status fs_flow_read(const char* path, fs_flow** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    *out = new fs_flow{flowstyle::read_flo_file(path)};
  });
}

fs_status fs_flow_write(const fs_flow* flow, const char* path) {
  return guarded([&] {
    require(flow != nullptr && path != nullptr, "null argument");
    flowstyle::write_flo_file(flow->value, path);
  });
}

int fs_flow_height(const fs_flow* flow) { return flow ? flow->value.height : 0; }
int fs_flow_width(const fs_flow* flow) { return flow ? flow->value.width : 0; }
const float* fs_flow_data(const fs_flow* flow) { return flow ? flow->value.uv.data() : nullptr; }
void fs_flow_destroy(fs_flow* flow) { delete flow; }

fs_status fs_flows_load(const char* dir, size_t frame_count, fs_flow*** out, size_t* count) {
  return guarded([&] {
    require(dir != nullptr && out != nullptr && count != nullptr, "null argument");
    auto flows = flowstyle::read_sequence_flows(dir, frame_count, false);
    const size_t n = flows.back.size();
    auto** arr = static_cast<fs_flow**>(std::calloc(n == 0 ? 1 : n, sizeof(fs_flow*)));
    if (!arr) throw std::bad_alloc();
    for (size_t i = 0; i < n; ++i) arr[i] = new fs_flow{std::move(flows.back[i])};
    *out = arr;
    *count = n;
  });
}

void fs_flow_array_free(fs_flow** flows, size_t count) {
  if (!flows) return;
  for (size_t i = 0; i < count; ++i) delete flows[i];
  std::free(flows);
}

fs_status fs_flow_estimate(const fs_image* a, const fs_image* b, const fs_hs_config* cfg, fs_flow** out) {
  return guarded([&] {
    require(a && b && out, "null argument");
    *out = new fs_flow{flowstyle::estimate_flow(a->value, b->value, to_config(cfg))};
  });
}

fs_status fs_flow_for_warp(const fs_image* prev, const fs_image* next, const fs_hs_config* cfg, fs_flow** out) {
  return guarded([&] {
    require(prev && next && out, "null argument");
    *out = new fs_flow{flowstyle::invert_for_warp(prev->value, next->value, to_config(cfg))};
  });
}

fs_status fs_warp(const fs_image* image, const fs_flow* flow, fs_image** out, fs_image** mask) {
  return guarded([&] {
    require(image && flow && out, "null argument");
    auto result = flowstyle::warp(image->value, flow->value);
    if (mask) {
      flowstyle::ImageTensor m(result.valid.height, result.valid.width, 1);
      for (size_t p = 0; p < result.valid.valid.size(); ++p) m.data()[p] = result.valid.valid[p] ? 1.0f : 0.0f;
      *mask = new fs_image{std::move(m)};
    }
    *out = new fs_image{std::move(result.image)};
  });
}

fs_status fs_coherence(const fs_image* const* frames, size_t frame_count, const fs_flow* const* flows,
                       size_t flow_count, double* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    const auto seq = gather(frames, frame_count);
    require(flows != nullptr || flow_count == 0, "flow array is null");
    std::vector<flowstyle::FlowField> fields;
    for (size_t i = 0; i < flow_count; ++i) {
      require(flows[i] != nullptr, "flow handle is null");
      fields.push_back(flows[i]->value);
    }
    *out = flowstyle::coherence_metric(seq, fields);
  });
}

// ---- color / sequences -----------------------------------------------------

fs_status fs_histmatch(const fs_image* source, const fs_image* reference, int bins, fs_image** out) {
  return guarded([&] {
    require(source && reference && out, "null argument");
    *out = new fs_image{flowstyle::match_histogram(source->value, reference->value, bins)};
  });
}

fs_status fs_style_movie(const fs_image* style, const fs_image* const* frames, size_t frame_count, int bins,
                         fs_image** out) {
  return guarded([&] {
    require(style && out, "null argument");
    const auto seq = gather(frames, frame_count);
    auto movie = flowstyle::build_style_movie(style->value, seq, bins);
    for (size_t i = 0; i < movie.size(); ++i) out[i] = new fs_image{std::move(movie[i])};
  });
}

fs_status fs_scene_cuts(const fs_image* const* frames, size_t frame_count, double threshold, int* indices,
                        size_t capacity, size_t* count) {
  return guarded([&] {
    require(count != nullptr && (indices != nullptr || capacity == 0), "null argument");
    const auto seq = gather(frames, frame_count);
    const auto cuts = flowstyle::detect_scene_cuts(seq, threshold);
    for (size_t i = 0; i < cuts.size() && i < capacity; ++i) indices[i] = cuts[i];
    *count = cuts.size();
  });
}

}  // extern "C"
