#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pipeline.hpp"

namespace flowstyle {

enum class FlowMode { Builtin, External };

// A file-driven video render. Keys mirror the JSON config file:
// style, frames_dir, out_dir, strategy, iterations, scene_cuts, flow_mode,
// flow_dir, hist_match, weights.{content,style,tv,temporal,temporal_kind,
// charbonnier_eps}, fps, passes, auto_balance, jobs, network_spec,
// network_weights, step_size.
struct RenderJob {
  std::filesystem::path style;
  std::filesystem::path frames_dir;
  std::filesystem::path out_dir;
  FlowMode flow_mode = FlowMode::Builtin;
  std::filesystem::path flow_dir;
  std::optional<std::filesystem::path> network_spec;
  std::optional<std::filesystem::path> network_weights;
  RenderOptions options;
  HSConfig flow_config;
  double fps = 10.0;
};

// Applies a JSON weights object (same keys as the job's "weights") on top of
// `base`. A "content" or "style" object replaces that whole layer map.
LossWeights parse_loss_weights(const std::string& json_text, const LossWeights& base);

// Parses a job from JSON text. Relative paths resolve against `base_dir`.
RenderJob parse_render_job(const std::string& json_text, const std::filesystem::path& base_dir);

// Frames named frame_%05d.{png,ppm}, 0-based and contiguous. Throws
// MissingFrame on an empty directory or a gap.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

std::filesystem::path flo_path(const std::filesystem::path& dir, int index, bool next);

// Loads `flow_%05d.flo` (t -> t-1) for t >= 1 and, when `with_next`,
// `flow_next_%05d.flo` (t -> t+1). Throws FlowUnavailable.
SequenceFlows read_sequence_flows(const std::filesystem::path& dir, std::size_t frame_count, bool with_next);

std::string trace_json(const RenderJob& job, const RenderResult& result);

struct VideoOutcome {
  RenderResult result;
  std::vector<std::filesystem::path> written;
};

// Runs the job end to end: reads inputs, renders, writes every completed
// frame plus trace.json to out_dir. A per-frame failure is rethrown after the
// completed frames and trace are written.
VideoOutcome render_video(const RenderJob& job);

}  // namespace flowstyle
