// flowstyle command-line front end. Every command is a thin adapter over the
// C API in flowstyle/flowstyle.h.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowstyle/flowstyle.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Failure {
  fs_status status;
  std::string message;
};

void check(fs_status s) {
  if (s != FS_OK) throw Failure{s, fs_last_error()};
}

struct ImageDeleter {
  void operator()(fs_image* p) const { fs_image_destroy(p); }
};
struct FlowDeleter {
  void operator()(fs_flow* p) const { fs_flow_destroy(p); }
};
struct NetworkDeleter {
  void operator()(fs_network* p) const { fs_network_destroy(p); }
};
struct WeightsDeleter {
  void operator()(fs_weights* p) const { fs_weights_destroy(p); }
};
using ImagePtr = std::unique_ptr<fs_image, ImageDeleter>;
using FlowPtr = std::unique_ptr<fs_flow, FlowDeleter>;
using NetworkPtr = std::unique_ptr<fs_network, NetworkDeleter>;
using WeightsPtr = std::unique_ptr<fs_weights, WeightsDeleter>;

ImagePtr load_image(const std::string& path) {
  fs_image* img = nullptr;
  check(fs_image_load(path.c_str(), &img));
  return ImagePtr(img);
}

class Frames {
 public:
  explicit Frames(const std::string& dir) { check(fs_frames_load(dir.c_str(), &items_, &count_)); }
  Frames(const Frames&) = delete;
  Frames& operator=(const Frames&) = delete;
  ~Frames() { fs_image_array_free(items_, count_); }
  const fs_image* const* data() const { return items_; }
  std::size_t size() const { return count_; }
  const fs_image* operator[](std::size_t i) const { return items_[i]; }

 private:
  fs_image** items_ = nullptr;
  std::size_t count_ = 0;
};

class Flows {
 public:
  Flows(const std::string& dir, std::size_t frames) { check(fs_flows_load(dir.c_str(), frames, &items_, &count_)); }
  Flows(const Frames& frames, const fs_hs_config& cfg) {
    for (std::size_t t = 1; t < frames.size(); ++t) {
      fs_flow* f = nullptr;
      check(fs_flow_for_warp(frames[t - 1], frames[t], &cfg, &f));
      owned_.emplace_back(f);
      view_.push_back(f);
    }
  }
  Flows(const Flows&) = delete;
  Flows& operator=(const Flows&) = delete;
  ~Flows() {
    if (items_) fs_flow_array_free(items_, count_);
  }
  const fs_flow* const* data() const { return items_ ? items_ : view_.data(); }
  std::size_t size() const { return items_ ? count_ : view_.size(); }

 private:
  fs_flow** items_ = nullptr;
  std::size_t count_ = 0;
  std::vector<FlowPtr> owned_;
  std::vector<fs_flow*> view_;
};

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw Failure{FS_ERR_IO, "cannot open config '" + path + "'"};
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Failure{FS_ERR_PARSE, "config '" + path + "': " + e.what()};
  }
}

std::string absolute(const std::string& p) { return fs::absolute(p).string(); }

std::string base_dir_of(const std::string& config) {
  return config.empty() ? fs::current_path().string() : fs::absolute(config).parent_path().string();
}

// `--weights.*` overrides; each present flag replaces the matching config key.
struct WeightFlags {
  std::vector<std::string> content;
  std::vector<std::string> style;
  std::optional<float> tv;
  std::optional<float> temporal;
  std::optional<std::string> temporal_kind;
  std::optional<float> charbonnier_eps;

  void attach(CLI::App* app) {
    app->add_option("--weights.content", content, "content layer weight, LAYER=VALUE (repeatable)");
    app->add_option("--weights.style", style, "style layer weight, LAYER=VALUE (repeatable)");
    app->add_option("--weights.tv", tv, "total-variation weight");
    app->add_option("--weights.temporal", temporal, "temporal weight");
    app->add_option("--weights.temporal_kind", temporal_kind, "squared | charbonnier")
        ->check(CLI::IsMember({"squared", "charbonnier"}));
    app->add_option("--weights.charbonnier_eps", charbonnier_eps, "Charbonnier epsilon");
  }

  static json layer_map(const std::vector<std::string>& items) {
    json m = json::object();
    for (const auto& item : items) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--weights", "expected LAYER=VALUE, got '" + item + "'");
      try {
        m[item.substr(0, eq)] = std::stof(item.substr(eq + 1));
      } catch (const std::exception&) {
        throw CLI::ValidationError("--weights", "bad number in '" + item + "'");
      }
    }
    return m;
  }

  void merge_into(json& cfg) const {
    json& w = cfg["weights"];
    if (!w.is_object()) w = json::object();
    if (!content.empty()) w["content"] = layer_map(content);
    if (!style.empty()) w["style"] = layer_map(style);
    if (tv) w["tv"] = *tv;
    if (temporal) w["temporal"] = *temporal;
    if (temporal_kind) w["temporal_kind"] = *temporal_kind;
    if (charbonnier_eps) w["charbonnier_eps"] = *charbonnier_eps;
  }
};

struct HsFlags {
  fs_hs_config cfg{};
  HsFlags() { fs_hs_config_default(&cfg); }
  void attach(CLI::App* app) {
    app->add_option("--alpha", cfg.alpha, "smoothness weight")->capture_default_str();
    app->add_option("--levels", cfg.levels, "pyramid levels")->capture_default_str();
    app->add_option("--hs-iterations", cfg.iterations, "iterations per level")->capture_default_str();
    app->add_option("--downscale", cfg.downscale, "pyramid scale factor")->capture_default_str();
  }
};

NetworkPtr open_network(const json& cfg, const std::string& base) {
  fs_network* net = nullptr;
  if (cfg.contains("network_spec") || cfg.contains("network_weights")) {
    if (!cfg.contains("network_spec") || !cfg.contains("network_weights")) {
      throw Failure{FS_ERR_INVALID_ARGUMENT, "network_spec and network_weights go together"};
    }
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (fs::path(base) / p).string(); };
    check(fs_network_load(resolve(cfg.at("network_spec")).c_str(), resolve(cfg.at("network_weights")).c_str(), &net));
  } else {
    check(fs_network_tiny_vgg(&net));
  }
  return NetworkPtr(net);
}

// ---------------------------------------------------------------------------

struct RenderImageCmd {
  std::string config, content, style, out, init, network_spec, network_weights;
  std::optional<int> iterations;
  std::optional<float> step_size;
  std::optional<bool> auto_balance;
  WeightFlags weights;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config (same keys as these flags)")->check(CLI::ExistingFile);
    app->add_option("--content", content, "content image");
    app->add_option("--style", style, "style image");
    app->add_option("--out", out, "output image (.png or .ppm)");
    app->add_option("--iterations", iterations, "Adam iterations")->check(CLI::NonNegativeNumber);
    app->add_option("--step_size,--step-size", step_size, "Adam step size");
    app->add_flag("--auto_balance,--auto-balance", auto_balance, "balance term weights at the first iterate");
    app->add_option("--init", init, "content | noise")->check(CLI::IsMember({"content", "noise"}));
    app->add_option("--network_spec,--network-spec", network_spec, "network text spec");
    app->add_option("--network_weights,--network-weights", network_weights, "NSWT weight file");
    weights.attach(app);
  }

  int run(std::optional<std::uint64_t> seed) const {
    json cfg = read_config(config);
    const std::string base = base_dir_of(config);
    if (!content.empty()) cfg["content"] = absolute(content);
    if (!style.empty()) cfg["style"] = absolute(style);
    if (!out.empty()) cfg["out"] = absolute(out);
    if (iterations) cfg["iterations"] = *iterations;
    if (step_size) cfg["step_size"] = *step_size;
    if (auto_balance) cfg["auto_balance"] = *auto_balance;
    if (!init.empty()) cfg["init"] = init;
    if (!network_spec.empty()) cfg["network_spec"] = absolute(network_spec);
    if (!network_weights.empty()) cfg["network_weights"] = absolute(network_weights);
    weights.merge_into(cfg);

    for (const char* key : {"content", "style", "out"}) {
      if (!cfg.contains(key)) throw CLI::RequiredError(std::string("--") + key);
    }
    auto path = [&](const char* key) {
      const std::string p = cfg.at(key).get<std::string>();
      return fs::path(p).is_absolute() ? p : (fs::path(base) / p).string();
    };

    fs_render_options opts;
    fs_render_options_default(&opts);
    opts.iterations = cfg.value("iterations", opts.iterations);
    opts.step_size = cfg.value("step_size", opts.step_size);
    opts.auto_balance = cfg.value("auto_balance", opts.auto_balance != 0) ? 1 : 0;
    const std::string init_kind = cfg.value("init", std::string("content"));
    if (init_kind != "content" && init_kind != "noise") throw Failure{FS_ERR_INVALID_ARGUMENT, "unknown init '" + init_kind + "'"};
    opts.init = init_kind == "noise" ? FS_INIT_NOISE : FS_INIT_CONTENT;
    if (seed) cfg["seed"] = *seed;
    opts.seed = cfg.value("seed", std::uint64_t{0});

    fs_weights* w = nullptr;
    check(fs_weights_default(&w));
    WeightsPtr wp(w);
    check(fs_weights_apply_json(w, cfg.at("weights").dump().c_str()));

    const NetworkPtr net = open_network(cfg, base);
    const ImagePtr c = load_image(path("content"));
    const ImagePtr s = load_image(path("style"));
    fs_image* result = nullptr;
    fs_energy start{}, end{};
    check(fs_render_image(net.get(), c.get(), s.get(), w, &opts, &result, &start, &end));
    const ImagePtr rp(result);
    check(fs_image_save(result, path("out").c_str()));
    std::cerr << "energy " << start.total << " -> " << end.total << "\n";
    return 0;
  }
};

struct RenderVideoCmd {
  std::string config, style, frames_dir, out_dir, strategy, flow_mode, flow_dir, network_spec, network_weights;
  std::optional<int> iterations, passes;
  std::optional<float> step_size;
  std::optional<double> fps;
  std::optional<bool> auto_balance, hist_match;
  std::vector<int> scene_cuts;
  WeightFlags weights;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON job file")->check(CLI::ExistingFile);
    app->add_option("--style", style, "style image");
    app->add_option("--frames_dir,--frames-dir", frames_dir, "directory of frame_%05d.png|ppm");
    app->add_option("--out_dir,--out-dir", out_dir, "output directory");
    app->add_option("--strategy", strategy, "independent | previous-frame | flow-init | flow-init-loss | joint-backtrack")
        ->check(CLI::IsMember({"independent", "previous-frame", "flow-init", "flow-init-loss", "joint-backtrack"}));
    app->add_option("--iterations", iterations, "Adam iterations per frame")->check(CLI::NonNegativeNumber);
    app->add_option("--step_size,--step-size", step_size, "Adam step size");
    app->add_flag("--auto_balance,--auto-balance", auto_balance, "balance term weights per frame");
    app->add_option("--scene_cuts,--scene-cuts", scene_cuts, "frame indices that restart from content")->delimiter(',');
    app->add_flag("--hist_match,--hist-match", hist_match, "per-frame style targets from the style movie");
    app->add_option("--passes", passes, "joint back-tracking sweeps")->check(CLI::PositiveNumber);
    app->add_option("--fps", fps, "frame-rate metadata");
    app->add_option("--flow_mode,--flow-mode", flow_mode, "builtin | external")->check(CLI::IsMember({"builtin", "external"}));
    app->add_option("--flow_dir,--flow-dir", flow_dir, "directory of flow_%05d.flo");
    app->add_option("--network_spec,--network-spec", network_spec, "network text spec");
    app->add_option("--network_weights,--network-weights", network_weights, "NSWT weight file");
    weights.attach(app);
  }

  int run(std::optional<int> jobs) const {
    json cfg = read_config(config);
    if (!style.empty()) cfg["style"] = absolute(style);
    if (!frames_dir.empty()) cfg["frames_dir"] = absolute(frames_dir);
    if (!out_dir.empty()) cfg["out_dir"] = absolute(out_dir);
    if (!strategy.empty()) cfg["strategy"] = strategy;
    if (iterations) cfg["iterations"] = *iterations;
    if (step_size) cfg["step_size"] = *step_size;
    if (auto_balance) cfg["auto_balance"] = *auto_balance;
    if (!scene_cuts.empty()) cfg["scene_cuts"] = scene_cuts;
    if (hist_match) cfg["hist_match"] = *hist_match;
    if (passes) cfg["passes"] = *passes;
    if (fps) cfg["fps"] = *fps;
    if (!flow_mode.empty()) cfg["flow_mode"] = flow_mode;
    if (!flow_dir.empty()) cfg["flow_dir"] = absolute(flow_dir);
    if (!network_spec.empty()) cfg["network_spec"] = absolute(network_spec);
    if (!network_weights.empty()) cfg["network_weights"] = absolute(network_weights);
    if (jobs) cfg["jobs"] = *jobs;
    weights.merge_into(cfg);
    for (const char* key : {"style", "frames_dir", "out_dir"}) {
      if (!cfg.contains(key)) throw CLI::RequiredError(std::string("--") + key);
    }
    double coherence = 0.0;
    check(fs_render_video(cfg.dump().c_str(), base_dir_of(config).c_str(), &coherence));
    std::printf("%.9g\n", coherence);
    return 0;
  }
};

struct FlowEstimateCmd {
  std::string a, b, out;
  bool for_warp = false;
  HsFlags hs;

  void attach(CLI::App* app) {
    app->add_option("--a", a, "first frame")->required();
    app->add_option("--b", b, "second frame")->required();
    app->add_option("--out", out, "output .flo")->required();
    app->add_flag("--for-warp", for_warp, "write the backward field that warps a onto b");
    hs.attach(app);
  }

  int run() const {
    const ImagePtr ia = load_image(a), ib = load_image(b);
    fs_flow* f = nullptr;
    check(for_warp ? fs_flow_for_warp(ia.get(), ib.get(), &hs.cfg, &f) : fs_flow_estimate(ia.get(), ib.get(), &hs.cfg, &f));
    const FlowPtr fp(f);
    check(fs_flow_write(f, out.c_str()));
    return 0;
  }
};

struct FlowWarpCmd {
  std::string image, flow, out, mask;

  void attach(CLI::App* app) {
    app->add_option("--image", image, "image to warp")->required();
    app->add_option("--flow", flow, "backward flow (.flo)")->required();
    app->add_option("--out", out, "warped image")->required();
    app->add_option("--mask", mask, "optional validity mask image");
  }

  int run() const {
    const ImagePtr img = load_image(image);
    fs_flow* f = nullptr;
    check(fs_flow_read(flow.c_str(), &f));
    const FlowPtr fp(f);
    fs_image* warped = nullptr;
    fs_image* valid = nullptr;
    check(fs_warp(img.get(), f, &warped, mask.empty() ? nullptr : &valid));
    const ImagePtr wp(warped), vp(valid);
    check(fs_image_save(warped, out.c_str()));
    if (valid) check(fs_image_save(valid, mask.c_str()));
    return 0;
  }
};

struct HistmatchCmd {
  std::string source, reference, out;
  int bins = 256;

  void attach(CLI::App* app) {
    app->add_option("--source", source, "image to recolor")->required();
    app->add_option("--reference", reference, "histogram reference")->required();
    app->add_option("--out", out, "output image")->required();
    app->add_option("--bins", bins, "histogram bins")->capture_default_str();
  }

  int run() const {
    const ImagePtr s = load_image(source), r = load_image(reference);
    fs_image* m = nullptr;
    check(fs_histmatch(s.get(), r.get(), bins, &m));
    const ImagePtr mp(m);
    check(fs_image_save(m, out.c_str()));
    return 0;
  }
};

struct StyleMovieCmd {
  std::string style, frames, out_dir, ext = ".png";
  int bins = 256;

  void attach(CLI::App* app) {
    app->add_option("--style", style, "style image")->required();
    app->add_option("--frames", frames, "frame directory")->required();
    app->add_option("--out-dir,--out_dir", out_dir, "output directory")->required();
    app->add_option("--bins", bins, "histogram bins")->capture_default_str();
    app->add_option("--ext", ext, "output extension")->check(CLI::IsMember({".png", ".ppm"}))->capture_default_str();
  }

  int run() const {
    const ImagePtr s = load_image(style);
    const Frames fr(frames);
    std::vector<fs_image*> outs(fr.size(), nullptr);
    check(fs_style_movie(s.get(), fr.data(), fr.size(), bins, outs.data()));
    std::vector<ImagePtr> owned;
    for (fs_image* p : outs) owned.emplace_back(p);
    check(fs_frames_save(outs.data(), outs.size(), out_dir.c_str(), ext.c_str()));
    return 0;
  }
};

struct CoherenceCmd {
  std::string frames, flows;
  HsFlags hs;

  void attach(CLI::App* app) {
    app->add_option("--frames", frames, "rendered frame directory")->required();
    app->add_option("--flows", flows, "directory of flow_%05d.flo (estimated when omitted)");
    hs.attach(app);
  }

  int run() const {
    const Frames fr(frames);
    const std::unique_ptr<Flows> fl = flows.empty() ? std::make_unique<Flows>(fr, hs.cfg) : std::make_unique<Flows>(flows, fr.size());
    double c = 0.0;
    check(fs_coherence(fr.data(), fr.size(), fl->data(), fl->size(), &c));
    std::printf("%.9g\n", c);
    return 0;
  }
};

struct CutsCmd {
  std::string frames;
  double threshold = 0.1;

  void attach(CLI::App* app) {
    app->add_option("--frames", frames, "frame directory")->required();
    app->add_option("--threshold", threshold, "mean absolute difference threshold")->capture_default_str();
  }

  int run() const {
    const Frames fr(frames);
    std::size_t count = 0;
    check(fs_scene_cuts(fr.data(), fr.size(), threshold, nullptr, 0, &count));
    std::vector<int> idx(count);
    check(fs_scene_cuts(fr.data(), fr.size(), threshold, idx.data(), idx.size(), &count));
    for (std::size_t k = 0; k < idx.size(); ++k) std::printf(k ? " %d" : "%d", idx[k]);
    std::printf("\n");
    return 0;
  }
};

struct WeightsInfoCmd {
  std::string config, network_spec, network_weights, write_dir;
  WeightFlags weights;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config with a \"weights\" object")->check(CLI::ExistingFile);
    app->add_option("--network_spec,--network-spec", network_spec, "network text spec");
    app->add_option("--network_weights,--network-weights", network_weights, "NSWT weight file");
    app->add_option("--write-tiny-vgg", write_dir, "write tiny_vgg.net and tiny_vgg.nswt into DIR");
    weights.attach(app);
  }

  int run() const {
    if (!write_dir.empty()) {
      fs::create_directories(write_dir);
      const auto spec = (fs::path(write_dir) / "tiny_vgg.net").string();
      const auto nswt = (fs::path(write_dir) / "tiny_vgg.nswt").string();
      check(fs_network_write_tiny_vgg(spec.c_str(), nswt.c_str()));
      return 0;
    }
    json cfg = read_config(config);
    if (!network_spec.empty()) cfg["network_spec"] = absolute(network_spec);
    if (!network_weights.empty()) cfg["network_weights"] = absolute(network_weights);
    weights.merge_into(cfg);
    const NetworkPtr net = open_network(cfg, base_dir_of(config));
    static const char* kinds[] = {"conv", "relu", "pool"};
    for (std::size_t i = 0; i < fs_network_layer_count(net.get()); ++i) {
      const auto kind = fs_network_layer_kind(net.get(), i);
      std::printf("%-8s %s", fs_network_layer_name(net.get(), i), kinds[kind]);
      if (kind == FS_LAYER_CONV) {
        int shape[4];
        check(fs_network_layer_shape(net.get(), i, shape));
        std::printf(" %d %d %d %d", shape[1], shape[0], shape[2], shape[3]);
      }
      std::printf("\n");
    }
    fs_weights* w = nullptr;
    check(fs_weights_default(&w));
    const WeightsPtr wp(w);
    check(fs_weights_apply_json(w, cfg.at("weights").dump().c_str()));
    char* text = nullptr;
    check(fs_weights_to_json(w, &text));
    std::printf("%s\n", text);
    fs_string_free(text);
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural style transfer for image sequences with flow-warped initialization", "flowstyle"};
  app.set_version_flag("--version", std::string("flowstyle ") + fs_version());
  app.require_subcommand(1, 1);
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  app.add_option("--seed", seed, "seed for noise initialization");
  app.add_option("--jobs", jobs, "worker threads for independent frames")->check(CLI::PositiveNumber);

  RenderImageCmd render_image;
  RenderVideoCmd render_video;
  FlowEstimateCmd flow_estimate;
  FlowWarpCmd flow_warp;
  HistmatchCmd histmatch;
  StyleMovieCmd style_movie;
  CoherenceCmd coherence;
  CutsCmd cuts;
  WeightsInfoCmd weights_info;

  auto* c_render_image = app.add_subcommand("render-image", "stylize one image");
  auto* c_render_video = app.add_subcommand("render-video", "stylize a frame sequence");
  auto* c_flow_estimate = app.add_subcommand("flow-estimate", "estimate optical flow between two frames");
  auto* c_flow_warp = app.add_subcommand("flow-warp", "backward-warp an image by a flow field");
  auto* c_histmatch = app.add_subcommand("histmatch", "match per-channel histograms");
  auto* c_style_movie = app.add_subcommand("style-movie", "per-frame histogram-matched style images");
  auto* c_coherence = app.add_subcommand("coherence", "temporal coherence of a rendered sequence");
  auto* c_cuts = app.add_subcommand("cuts", "detect scene cuts by frame difference");
  auto* c_weights_info = app.add_subcommand("weights-info", "describe the network and loss weights");
  render_image.attach(c_render_image);
  render_video.attach(c_render_video);
  flow_estimate.attach(c_flow_estimate);
  flow_warp.attach(c_flow_warp);
  histmatch.attach(c_histmatch);
  style_movie.attach(c_style_movie);
  coherence.attach(c_coherence);
  cuts.attach(c_cuts);
  weights_info.attach(c_weights_info);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_render_image->parsed()) return render_image.run(seed);
    if (c_render_video->parsed()) return render_video.run(jobs);
    if (c_flow_estimate->parsed()) return flow_estimate.run();
    if (c_flow_warp->parsed()) return flow_warp.run();
    if (c_histmatch->parsed()) return histmatch.run();
    if (c_style_movie->parsed()) return style_movie.run();
    if (c_coherence->parsed()) return coherence.run();
    if (c_cuts->parsed()) return cuts.run();
    if (c_weights_info->parsed()) return weights_info.run();
  } catch (const CLI::Error& e) {
    std::cerr << "flowstyle: " << e.what() << "\n";
    return 2;
  } catch (const Failure& f) {
    std::cerr << "flowstyle: " << fs_status_name(f.status) << ": " << f.message << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "flowstyle: config: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "flowstyle: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
