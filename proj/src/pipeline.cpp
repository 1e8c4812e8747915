#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "color.hpp"

namespace flowstyle {

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::Independent: return "independent";
    case Strategy::PreviousFrame: return "previous-frame";
    case Strategy::FlowInit: return "flow-init";
    case Strategy::FlowInitWithLoss: return "flow-init-loss";
    case Strategy::JointBacktrack: return "joint-backtrack";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::Independent, Strategy::PreviousFrame, Strategy::FlowInit, Strategy::FlowInitWithLoss,
                     Strategy::JointBacktrack}) {
    if (name == to_string(s)) return s;
  }
  fail(ErrorCode::InvalidArgument, "unknown strategy '" + name + "'");
}

const char* to_string(InitKind k) {
  switch (k) {
    case InitKind::Content: return "content";
    case InitKind::Previous: return "previous";
    case InitKind::WarpedPrevious: return "warped-previous";
  }
  return "?";
}

void RenderOptions::validate(std::size_t frame_count) const {
  if (frame_count == 0) fail(ErrorCode::EmptySequence, "render job has no frames");
  if (strategy == Strategy::JointBacktrack && joint_passes < 1) {
    fail(ErrorCode::InvalidArgument, "joint back-tracking needs at least one pass");
  }
  for (std::size_t k = 0; k < scene_cuts.size(); ++k) {
    if (scene_cuts[k] < 0 || static_cast<std::size_t>(scene_cuts[k]) >= frame_count) {
      fail(ErrorCode::InvalidArgument, "scene cut " + std::to_string(scene_cuts[k]) + " out of range");
    }
    if (k > 0 && scene_cuts[k] <= scene_cuts[k - 1]) {
      fail(ErrorCode::InvalidArgument, "scene cuts must be strictly increasing");
    }
  }
  if (jobs < 1) fail(ErrorCode::InvalidArgument, "jobs must be >= 1");
  weights.validate();
}

bool RenderOptions::is_cut(int t) const {
  return t == 0 || std::binary_search(scene_cuts.begin(), scene_cuts.end(), t);
}

LossWeights RenderOptions::effective_weights() const {
  LossWeights w = weights;
  const bool temporal = strategy == Strategy::FlowInitWithLoss || strategy == Strategy::JointBacktrack;
  if (!temporal) {
    w.temporal = 0.0f;
  } else if (w.temporal == 0.0f) {
    w.temporal = kDefaultTemporalWeight;
  }
  return w;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  for (std::size_t w = 0; w < n; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += n) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

void check_uniform(std::span<const ImageTensor> frames, const ImageTensor& style) {
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) fail(ErrorCode::SizeMismatch, "frames differ in resolution");
  }
  if (style.channels() != frames.front().channels()) {
    fail(ErrorCode::ChannelMismatch, "style and frames differ in channel count");
  }
}

void check_flows(const SequenceFlows& flows, std::size_t n, bool with_next) {
  if (flows.back.size() + 1 != n) {
    fail(ErrorCode::FlowUnavailable, "need " + std::to_string(n - 1) + " backward flows, have " +
                                         std::to_string(flows.back.size()));
  }
  if (with_next && flows.next.size() + 1 != n) {
    fail(ErrorCode::FlowUnavailable, "need " + std::to_string(n - 1) + " next-frame flows, have " +
                                         std::to_string(flows.next.size()));
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Temporal terms for frame t from the current renders of its neighbours.
std::vector<TemporalTerm> neighbour_terms(int t, std::span<const ImageTensor> renders, const SequenceFlows& flows,
                                          const RenderOptions& options, bool include_next) {
  std::vector<TemporalTerm> terms;
  const int n = static_cast<int>(renders.size());
  auto push = [&](WarpResult w) {
    if (w.valid.count() > 0) terms.push_back({std::move(w.image), std::move(w.valid)});
  };
  if (t > 0 && !options.is_cut(t)) push(warp(renders[t - 1], flows.back[t - 1]));
  if (include_next && t + 1 < n && !options.is_cut(t + 1)) push(warp(renders[t + 1], flows.next[t]));
  return terms;
}

}  // namespace

SequenceFlows estimate_sequence_flows(std::span<const ImageTensor> frames, const HSConfig& cfg, bool with_next,
                                      int jobs) {
  SequenceFlows flows;
  if (frames.size() < 2) return flows;
  const std::size_t pairs = frames.size() - 1;
  flows.back.resize(pairs);
  if (with_next) flows.next.resize(pairs);
  parallel_for(pairs, jobs, [&](std::size_t k) {
    flows.back[k] = invert_for_warp(frames[k], frames[k + 1], cfg);
    if (with_next) flows.next[k] = invert_for_warp(frames[k + 1], frames[k], cfg);
  });
  return flows;
}

ImageTensor flow_initialization(const ImageTensor& previous_render, const ImageTensor& content,
                                const FlowField& flow_back) {
  WarpResult w = warp(previous_render, flow_back);
  const int ch = content.channels();
  auto dst = w.image.data();
  auto src = content.data();
  for (std::size_t p = 0; p < content.pixel_count(); ++p) {
    if (w.valid.valid[p]) continue;
    for (int c = 0; c < ch; ++c) dst[p * ch + c] = src[p * ch + c];
  }
  return std::move(w.image);
}

std::vector<StyleTargets> sequence_style_targets(const Network& net, std::span<const ImageTensor> frames,
                                                 const ImageTensor& style, const RenderOptions& options) {
  if (!options.hist_match) return {compute_style_targets(net, style, options.weights)};
  const auto movie = build_style_movie(style, frames, options.hist_bins);
  std::vector<StyleTargets> targets(movie.size());
  parallel_for(movie.size(), options.jobs,
               [&](std::size_t t) { targets[t] = compute_style_targets(net, movie[t], options.weights); });
  return targets;
}

RenderResult render_sequence(const Network& net, std::span<const ImageTensor> frames, const ImageTensor& style,
                             const RenderOptions& options, const SequenceFlows& flows) {
  options.validate(frames.size());
  check_uniform(frames, style);
  const bool joint = options.strategy == Strategy::JointBacktrack;
  check_flows(flows, frames.size(), joint);

  const auto targets = sequence_style_targets(net, frames, style, options);
  auto style_for = [&](std::size_t t) -> const StyleTargets& { return targets[targets.size() == 1 ? 0 : t]; };
  LossWeights weights = options.effective_weights();
  // Joint sweeps add the temporal term; the initial pass is plain FlowInit.
  if (joint) weights.temporal = 0.0f;

  const std::size_t n = frames.size();
  RenderResult result;
  result.trace.resize(n);

  auto render_frame = [&](std::size_t t, const ImageTensor& init, InitKind kind,
                          std::span<const TemporalTerm> temporal) {
    const auto t0 = std::chrono::steady_clock::now();
    auto out = style_transfer(net, init, frames[t], style_for(t), weights, options.transfer, temporal);
    if (out.report.termination == Termination::NonFiniteEnergy) {
      fail(ErrorCode::NonFiniteEnergy, "frame " + std::to_string(t) + ": energy became non-finite");
    }
    FrameTrace& tr = result.trace[t];
    tr.index = static_cast<int>(t);
    tr.init = kind;
    tr.start = out.start;
    tr.end = out.end;
    tr.iterations = out.report.iterations;
    tr.wall_seconds = seconds_since(t0);
    return out.image.clamped();
  };

  std::size_t done = 0;
  try {
    if (options.strategy == Strategy::Independent) {
      std::vector<ImageTensor> out(n);
      std::vector<std::optional<RenderFailure>> errors(n);
      parallel_for(n, options.jobs, [&](std::size_t t) {
        try {
          out[t] = render_frame(t, frames[t], InitKind::Content, {});
        } catch (const Error& e) {
          errors[t] = RenderFailure{e.code(), e.what(), static_cast<int>(t)};
        }
      });
      for (; done < n && !errors[done]; ++done) result.frames.push_back(std::move(out[done]));
      if (done < n) {
        result.failure = errors[done];
        result.trace.resize(done);
        return result;
      }
    } else {
      for (; done < n; ++done) {
        const std::size_t t = done;
        const int ti = static_cast<int>(t);
        if (options.is_cut(ti)) {
          result.frames.push_back(render_frame(t, frames[t], InitKind::Content, {}));
        } else if (options.strategy == Strategy::PreviousFrame) {
          result.frames.push_back(render_frame(t, result.frames[t - 1], InitKind::Previous, {}));
        } else {
          const ImageTensor init = flow_initialization(result.frames[t - 1], frames[t], flows.back[t - 1]);
          std::vector<TemporalTerm> temporal;
          if (weights.temporal != 0.0f) temporal = neighbour_terms(ti, result.frames, flows, options, false);
          result.frames.push_back(render_frame(t, init, InitKind::WarpedPrevious, temporal));
        }
      }
    }
    if (joint) {
      std::vector<ImageTensor> renders = std::move(result.frames);
      RenderOptions sweep = options;
      sweep.weights = options.effective_weights();
      result.frames = joint_backtrack_pass(net, frames, std::move(renders), flows, targets, sweep,
                                           options.joint_passes);
      LossWeights plain = options.weights;
      plain.temporal = 0.0f;
      for (std::size_t t = 0; t < n; ++t) {
        const auto content = compute_content_targets(net, frames[t], plain);
        result.trace[t].end = total_energy(net, result.frames[t], content, style_for(t), {}, plain, false).breakdown;
      }
    }
  } catch (const Error& e) {
    result.failure = RenderFailure{e.code(), e.what(), static_cast<int>(done)};
    result.trace.resize(result.frames.size());
    return result;
  }

  for (std::size_t t = 1; t < n; ++t) {
    result.trace[t].coherence = pair_coherence(result.frames[t - 1], result.frames[t], flows.back[t - 1]);
  }
  result.coherence = coherence_metric(result.frames, flows.back);
  return result;
}

std::vector<ImageTensor> joint_backtrack_pass(const Network& net, std::span<const ImageTensor> frames,
                                              std::vector<ImageTensor> renders, const SequenceFlows& flows,
                                              std::span<const StyleTargets> style, const RenderOptions& options,
                                              int passes) {
  if (passes < 0) fail(ErrorCode::InvalidArgument, "pass count must be >= 0");
  if (renders.size() != frames.size()) fail(ErrorCode::LengthMismatch, "renders and frames differ in count");
  if (style.size() != 1 && style.size() != frames.size()) {
    fail(ErrorCode::LengthMismatch, "style targets must be shared or per frame");
  }
  if (passes == 0) return renders;
  check_flows(flows, frames.size(), true);
  LossWeights weights = options.weights;
  TransferOptions transfer = options.transfer;
  transfer.auto_balance = false;
  transfer.keep_best = true;

  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto& targets = style[style.size() == 1 ? 0 : t];
      const auto terms = neighbour_terms(static_cast<int>(t), renders, flows, options, true);
      auto out = style_transfer(net, renders[t], frames[t], targets, weights, transfer, terms);
      if (out.report.termination == Termination::NonFiniteEnergy) {
        fail(ErrorCode::NonFiniteEnergy, "frame " + std::to_string(t) + ": energy became non-finite");
      }
      ImageTensor candidate = out.image.clamped();
      const auto content = compute_content_targets(net, frames[t], weights);
      const double before = total_energy(net, renders[t], content, targets, terms, weights, false).breakdown.total;
      const double after = total_energy(net, candidate, content, targets, terms, weights, false).breakdown.total;
      if (after <= before) renders[t] = std::move(candidate);
    }
  }
  return renders;
}

double sequence_energy(const Network& net, std::span<const ImageTensor> frames, std::span<const ImageTensor> renders,
                       const SequenceFlows& flows, std::span<const StyleTargets> style, const LossWeights& weights,
                       std::span<const int> scene_cuts) {
  if (renders.size() != frames.size()) fail(ErrorCode::LengthMismatch, "renders and frames differ in count");
  LossWeights per_frame = weights;
  per_frame.temporal = 0.0f;
  double total = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto content = compute_content_targets(net, frames[t], per_frame);
    const auto& targets = style[style.size() == 1 ? 0 : t];
    total += total_energy(net, renders[t], content, targets, {}, per_frame, false).breakdown.total;
    const bool cut = std::find(scene_cuts.begin(), scene_cuts.end(), static_cast<int>(t)) != scene_cuts.end();
    if (t > 0 && !cut && weights.temporal != 0.0f) {
      const WarpResult w = warp(renders[t - 1], flows.back[t - 1]);
      if (w.valid.count() > 0) total += temporal_loss(renders[t], w.image, w.valid, weights).value;
    }
  }
  return total;
}

std::vector<int> detect_scene_cuts(std::span<const ImageTensor> frames, double threshold) {
  if (!(threshold > 0.0)) fail(ErrorCode::InvalidArgument, "scene-cut threshold must be > 0");
  std::vector<int> cuts;
  for (std::size_t t = 1; t < frames.size(); ++t) {
    if (!frames[t].same_shape(frames[t - 1])) fail(ErrorCode::SizeMismatch, "frames differ in resolution");
    double sum = 0.0;
    auto a = frames[t].data();
    auto b = frames[t - 1].data();
    for (std::size_t k = 0; k < a.size(); ++k) sum += std::abs(static_cast<double>(a[k]) - b[k]);
    if (sum / static_cast<double>(a.size()) > threshold) cuts.push_back(static_cast<int>(t));
  }
  return cuts;
}

}  // namespace flowstyle
