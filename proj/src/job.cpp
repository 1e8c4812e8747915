#include "job.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "image_io.hpp"

namespace flowstyle {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

LossWeights parse_weights(const json& j, LossWeights w) {
  if (j.contains("content")) {
    w.content.clear();
    for (const auto& [name, v] : j.at("content").items()) w.content[name] = v.get<float>();
  }
  if (j.contains("style")) {
    w.style.clear();
    for (const auto& [name, v] : j.at("style").items()) w.style[name] = v.get<float>();
  }
  if (j.contains("tv")) w.tv = j.at("tv").get<float>();
  if (j.contains("temporal")) w.temporal = j.at("temporal").get<float>();
  if (j.contains("temporal_kind")) {
    const auto kind = j.at("temporal_kind").get<std::string>();
    if (kind == "squared") {
      w.temporal_kind = TemporalKind::Squared;
    } else if (kind == "charbonnier") {
      w.temporal_kind = TemporalKind::Charbonnier;
    } else {
      fail(ErrorCode::InvalidArgument, "unknown temporal_kind '" + kind + "'");
    }
  }
  if (j.contains("charbonnier_eps")) w.charbonnier_eps = j.at("charbonnier_eps").get<float>();
  return w;
}

json breakdown_json(const EnergyBreakdown& b) {
  return {{"content", b.content}, {"style", b.style}, {"tv", b.tv}, {"temporal", b.temporal}, {"total", b.total}};
}

std::string frame_name(int index, const std::string& ext) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%05d", index);
  return std::string(name) + ext;
}

}  // namespace

LossWeights parse_loss_weights(const std::string& json_text, const LossWeights& base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("weights: ") + e.what());
  }
  try {
    return parse_weights(j, base);
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("weights: ") + e.what());
  }
}

RenderJob parse_render_job(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("job config: ") + e.what());
  }
  RenderJob job;
  try {
    job.style = resolve(base_dir, j.at("style").get<std::string>());
    job.frames_dir = resolve(base_dir, j.at("frames_dir").get<std::string>());
    job.out_dir = resolve(base_dir, j.at("out_dir").get<std::string>());
    auto& o = job.options;
    if (j.contains("strategy")) o.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (j.contains("iterations")) o.transfer.iterations = j.at("iterations").get<int>();
    if (j.contains("step_size")) o.transfer.adam.step_size = j.at("step_size").get<float>();
    if (j.contains("auto_balance")) o.transfer.auto_balance = j.at("auto_balance").get<bool>();
    if (j.contains("scene_cuts")) o.scene_cuts = j.at("scene_cuts").get<std::vector<int>>();
    if (j.contains("hist_match")) o.hist_match = j.at("hist_match").get<bool>();
    if (j.contains("passes")) o.joint_passes = j.at("passes").get<int>();
    if (j.contains("jobs")) o.jobs = j.at("jobs").get<int>();
    if (j.contains("weights")) o.weights = parse_weights(j.at("weights"), o.weights);
    if (j.contains("fps")) job.fps = j.at("fps").get<double>();
    if (j.contains("flow_mode")) {
      const auto mode = j.at("flow_mode").get<std::string>();
      if (mode == "builtin") {
        job.flow_mode = FlowMode::Builtin;
      } else if (mode == "external") {
        job.flow_mode = FlowMode::External;
      } else {
        fail(ErrorCode::InvalidArgument, "unknown flow_mode '" + mode + "'");
      }
    }
    if (j.contains("flow_dir")) job.flow_dir = resolve(base_dir, j.at("flow_dir").get<std::string>());
    if (job.flow_mode == FlowMode::External && job.flow_dir.empty()) {
      fail(ErrorCode::InvalidArgument, "flow_mode external needs flow_dir");
    }
    if (j.contains("network_spec")) job.network_spec = resolve(base_dir, j.at("network_spec").get<std::string>());
    if (j.contains("network_weights")) {
      job.network_weights = resolve(base_dir, j.at("network_weights").get<std::string>());
    }
    if (job.network_spec.has_value() != job.network_weights.has_value()) {
      fail(ErrorCode::InvalidArgument, "network_spec and network_weights go together");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("job config: ") + e.what());
  }
  return job;
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> frames;
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::MissingFrame, "frames directory " + dir.string() + " not found");
  int highest = -1;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    int index = -1;
    char ext[8] = {};
    const auto name = entry.path().filename().string();
    if (std::sscanf(name.c_str(), "frame_%5d.%3s", &index, ext) == 2 && index >= 0 &&
        (std::string(ext) == "png" || std::string(ext) == "ppm") && name.size() == 15) {
      highest = std::max(highest, index);
    }
  }
  for (int t = 0; t <= highest; ++t) {
    const auto png = dir / frame_name(t, ".png");
    const auto ppm = dir / frame_name(t, ".ppm");
    if (std::filesystem::exists(png)) {
      frames.push_back(png);
    } else if (std::filesystem::exists(ppm)) {
      frames.push_back(ppm);
    } else {
      fail(ErrorCode::MissingFrame, "missing frame " + frame_name(t, ".png|ppm") + " in " + dir.string());
    }
  }
  if (frames.empty()) fail(ErrorCode::MissingFrame, "no frame_%05d images in " + dir.string());
  return frames;
}

std::filesystem::path flo_path(const std::filesystem::path& dir, int index, bool next) {
  char name[64];
  std::snprintf(name, sizeof(name), next ? "flow_next_%05d.flo" : "flow_%05d.flo", index);
  return dir / name;
}

SequenceFlows read_sequence_flows(const std::filesystem::path& dir, std::size_t frame_count, bool with_next) {
  SequenceFlows flows;
  auto load = [](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) fail(ErrorCode::FlowUnavailable, "missing flow file " + p.string());
    return read_flo_file(p);
  };
  for (std::size_t t = 1; t < frame_count; ++t) flows.back.push_back(load(flo_path(dir, static_cast<int>(t), false)));
  if (with_next) {
    for (std::size_t t = 0; t + 1 < frame_count; ++t) {
      flows.next.push_back(load(flo_path(dir, static_cast<int>(t), true)));
    }
  }
  return flows;
}

std::string trace_json(const RenderJob& job, const RenderResult& result) {
  json frames = json::array();
  for (const auto& t : result.trace) {
    frames.push_back({{"index", t.index},
                      {"init", to_string(t.init)},
                      {"iterations", t.iterations},
                      {"start", breakdown_json(t.start)},
                      {"end", breakdown_json(t.end)},
                      {"coherence", t.coherence},
                      {"wall_seconds", t.wall_seconds}});
  }
  json out = {{"strategy", to_string(job.options.strategy)},
              {"fps", job.fps},
              {"iterations", job.options.transfer.iterations},
              {"scene_cuts", job.options.scene_cuts},
              {"hist_match", job.options.hist_match},
              {"frames", frames},
              {"coherence", result.coherence},
              {"complete", !result.failure.has_value()}};
  if (result.failure) {
    out["error"] = {{"code", to_string(result.failure->code)},
                    {"message", result.failure->message},
                    {"frame", result.failure->frame}};
  }
  return out.dump(2) + "\n";
}

VideoOutcome render_video(const RenderJob& job) {
  const auto paths = list_frames(job.frames_dir);
  std::vector<ImageTensor> frames;
  frames.reserve(paths.size());
  for (const auto& p : paths) frames.push_back(read_image(p));
  const ImageTensor style = read_image(job.style);
  const Network net = job.network_spec ? load_network(*job.network_spec, *job.network_weights) : tiny_vgg();

  const bool with_next = job.options.strategy == Strategy::JointBacktrack;
  const SequenceFlows flows = job.flow_mode == FlowMode::External
                                  ? read_sequence_flows(job.flow_dir, frames.size(), with_next)
                                  : estimate_sequence_flows(frames, job.flow_config, with_next, job.options.jobs);

  VideoOutcome outcome;
  outcome.result = render_sequence(net, frames, style, job.options, flows);
  std::filesystem::create_directories(job.out_dir);
  for (std::size_t t = 0; t < outcome.result.frames.size(); ++t) {
    const auto path = job.out_dir / frame_name(static_cast<int>(t), paths[t].extension().string());
    write_image(outcome.result.frames[t], path);
    outcome.written.push_back(path);
  }
  std::ofstream trace(job.out_dir / "trace.json");
  if (!trace) fail(ErrorCode::Io, "cannot write trace.json in " + job.out_dir.string());
  trace << trace_json(job, outcome.result);
  trace.close();
  if (outcome.result.failure) {
    const auto& f = *outcome.result.failure;
    fail(f.code, "frame " + std::to_string(f.frame) + ": " + f.message);
  }
  return outcome;
}

}  // namespace flowstyle
