#include "optim.hpp"

#include <chrono>
#include <cmath>

#include "error.hpp"

namespace flowstyle {

const char* to_string(Termination t) {
  switch (t) {
    case Termination::IterationBudget: return "iteration_budget";
    case Termination::RelativeImprovement: return "relative_improvement";
    case Termination::NonFiniteEnergy: return "non_finite_energy";
  }
  return "?";
}

void adam_step(AdamState& state, ImageTensor& image, const ImageTensor& grad) {
  if (!image.same_shape(grad) || state.m.size() != image.size() || state.v.size() != image.size()) {
    fail(ErrorCode::ShapeMismatch, "adam state, image and gradient differ in size");
  }
  const auto& p = state.params;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const auto c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(p.beta1), t));
  const auto c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(p.beta2), t));
  auto x = image.data();
  auto g = grad.data();
  for (std::size_t k = 0; k < x.size(); ++k) {
    state.m[k] = p.beta1 * state.m[k] + (1.0f - p.beta1) * g[k];
    state.v[k] = p.beta2 * state.v[k] + (1.0f - p.beta2) * g[k] * g[k];
    const float m_hat = state.m[k] / c1;
    const float v_hat = state.v[k] / c2;
    x[k] -= p.step_size * m_hat / (std::sqrt(v_hat) + p.epsilon);
  }
}

namespace {
bool finite(const EnergyBreakdown& b) { return std::isfinite(b.total); }
}  // namespace

TransferResult style_transfer(const Network& net, const ImageTensor& init, const ImageTensor& content,
                              const StyleTargets& style, const LossWeights& weights,
                              const TransferOptions& options, std::span<const TemporalTerm> temporal) {
  if (!init.same_shape(content)) fail(ErrorCode::SizeMismatch, "init and content images differ in shape");
  if (options.iterations < 0) fail(ErrorCode::InvalidArgument, "iteration count must be >= 0");
  weights.validate();
  const auto started = std::chrono::steady_clock::now();

  TransferResult result;
  result.weights = weights;
  result.image = init;
  const auto content_targets = compute_content_targets(net, content, weights);

  auto evaluate = [&](const ImageTensor& x, bool grad) {
    return total_energy(net, x, content_targets, style, temporal, result.weights, grad);
  };

  if (options.auto_balance && options.iterations > 0) {
    const auto initial = evaluate(result.image, false).breakdown;
    if (initial.total > 0.0) result.weights = auto_balance_weights(initial, result.weights);
  }

  AdamState state(init.size(), options.adam);
  ImageTensor best = result.image;
  ImageTensor previous = result.image;
  double best_total = INFINITY;
  auto& report = result.report;
  for (int it = 0; it < options.iterations; ++it) {
    auto e = evaluate(result.image, true);
    if (!finite(e.breakdown) || !e.grad.all_finite()) {
      report.termination = Termination::NonFiniteEnergy;
      result.image = previous;
      break;
    }
    report.trace.push_back(e.breakdown);
    if (e.breakdown.total < best_total) {
      best_total = e.breakdown.total;
      if (options.keep_best) best = result.image;
    }
    if (options.min_relative_improvement && it >= 50) {
      const double before = report.trace[report.trace.size() - 51].total;
      if (before > 0.0 && (before - e.breakdown.total) / before < *options.min_relative_improvement) {
        report.termination = Termination::RelativeImprovement;
        break;
      }
    }
    ImageTensor next = result.image;
    adam_step(state, next, e.grad);
    if (!next.all_finite()) {
      report.termination = Termination::NonFiniteEnergy;
      break;
    }
    previous = std::move(result.image);
    result.image = std::move(next);
  }
  report.iterations = static_cast<int>(report.trace.size());

  result.end = evaluate(result.image, false).breakdown;
  if (options.keep_best && report.iterations > 0 && !(result.end.total <= best_total)) {
    result.image = best;
    result.end = evaluate(result.image, false).breakdown;
  }
  result.start = report.trace.empty() ? result.end : report.trace.front();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace flowstyle
