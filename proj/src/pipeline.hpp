#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "energy.hpp"
#include "error.hpp"
#include "flow.hpp"
#include "image.hpp"
#include "network.hpp"
#include "optim.hpp"

namespace flowstyle {

enum class Strategy { Independent, PreviousFrame, FlowInit, FlowInitWithLoss, JointBacktrack };

const char* to_string(Strategy s);
// Accepts the names produced by to_string ("independent", "previous-frame",
// "flow-init", "flow-init-loss", "joint-backtrack").
Strategy parse_strategy(const std::string& name);

enum class InitKind { Content, Previous, WarpedPrevious };

const char* to_string(InitKind k);

struct FrameTrace {
  int index = 0;
  InitKind init = InitKind::Content;
  EnergyBreakdown start;
  EnergyBreakdown end;
  double coherence = 0.0;  // pair term against the previous render; 0 for frame 0
  double wall_seconds = 0.0;
  int iterations = 0;
};

// Temporal weight used by FlowInitWithLoss and JointBacktrack when the
// configured weight is zero.
inline constexpr float kDefaultTemporalWeight = 1.0f;

struct RenderOptions {
  Strategy strategy = Strategy::FlowInit;
  int joint_passes = 1;
  LossWeights weights = LossWeights::defaults();
  TransferOptions transfer;
  std::vector<int> scene_cuts;  // strictly increasing frame indices
  bool hist_match = false;
  int hist_bins = 256;
  int jobs = 1;  // worker threads; only Independent fans out

  void validate(std::size_t frame_count) const;
  bool is_cut(int t) const;
  // Weights for the strategy, enabling the temporal term where it applies.
  LossWeights effective_weights() const;
};

// Backward-warp fields for a sequence. back[t-1] samples frame t-1 into frame
// t's geometry; next[t] samples frame t+1 into frame t (joint mode only).
struct SequenceFlows {
  std::vector<FlowField> back;
  std::vector<FlowField> next;
};

SequenceFlows estimate_sequence_flows(std::span<const ImageTensor> frames, const HSConfig& cfg, bool with_next,
                                      int jobs = 1);

struct RenderFailure {
  ErrorCode code;
  std::string message;
  int frame;
};

struct RenderResult {
  std::vector<ImageTensor> frames;  // clamped to [0,1]
  std::vector<FrameTrace> trace;
  double coherence = 0.0;
  std::optional<RenderFailure> failure;
};

// Renders every frame according to the strategy. A failing frame stops the
// job; completed frames and their trace are kept and `failure` is set.
RenderResult render_sequence(const Network& net, std::span<const ImageTensor> frames, const ImageTensor& style,
                             const RenderOptions& options, const SequenceFlows& flows);

// Initialization for frame t > 0 under the flow strategies: the warped
// previous render, with invalid pixels taken from the content frame.
ImageTensor flow_initialization(const ImageTensor& previous_render, const ImageTensor& content,
                                const FlowField& flow_back);

// Per-frame style targets: one shared set, or one per frame from the style
// movie when histogram matching is on.
std::vector<StyleTargets> sequence_style_targets(const Network& net, std::span<const ImageTensor> frames,
                                                 const ImageTensor& style, const RenderOptions& options);

// Re-optimizes every frame in order with neighbour consistency terms against
// the flow-warped current renders of t-1 and t+1, `passes` times. A frame is
// replaced only when its own objective does not increase.
std::vector<ImageTensor> joint_backtrack_pass(const Network& net, std::span<const ImageTensor> frames,
                                              std::vector<ImageTensor> renders, const SequenceFlows& flows,
                                              std::span<const StyleTargets> style, const RenderOptions& options,
                                              int passes);

// Sum of per-frame energies plus one forward temporal term per adjacent pair
// (pairs across a scene cut excluded).
double sequence_energy(const Network& net, std::span<const ImageTensor> frames, std::span<const ImageTensor> renders,
                       const SequenceFlows& flows, std::span<const StyleTargets> style, const LossWeights& weights,
                       std::span<const int> scene_cuts);

// Indices t >= 1 whose mean absolute difference to frame t-1 exceeds
// `threshold`.
std::vector<int> detect_scene_cuts(std::span<const ImageTensor> frames, double threshold);

}  // namespace flowstyle
