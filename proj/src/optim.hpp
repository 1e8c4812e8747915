#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "energy.hpp"
#include "image.hpp"
#include "network.hpp"

namespace flowstyle {

struct AdamParams {
  float step_size = 0.02f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

struct AdamState {
  AdamParams params;
  std::vector<float> m;
  std::vector<float> v;
  long step = 0;

  AdamState() = default;
  AdamState(std::size_t size, AdamParams p) : params(p), m(size, 0.0f), v(size, 0.0f) {}
};

// One bias-corrected Adam update, in place. Throws ShapeMismatch.
void adam_step(AdamState& state, ImageTensor& image, const ImageTensor& grad);

enum class Termination { IterationBudget, RelativeImprovement, NonFiniteEnergy };

const char* to_string(Termination t);

struct OptimizeReport {
  // trace[k] is the breakdown at the iterate fed to step k.
  std::vector<EnergyBreakdown> trace;
  int iterations = 0;
  double wall_seconds = 0.0;
  Termination termination = Termination::IterationBudget;
};

struct TransferOptions {
  int iterations = 1000;
  AdamParams adam;
  // Rebalance term weights once at the initial iterate.
  bool auto_balance = false;
  // Stop when the relative drop of the total over the last 50 iterations falls
  // below this value. Disabled when unset.
  std::optional<double> min_relative_improvement;
  // Return the lowest-energy iterate seen instead of the last one.
  bool keep_best = false;
};

struct TransferResult {
  // Raw iterate; clamp only when writing output.
  ImageTensor image;
  OptimizeReport report;
  EnergyBreakdown start;
  EnergyBreakdown end;
  LossWeights weights;  // after balancing
};

// The ST operator: minimizes the energy starting from `init`. A non-finite
// energy stops the run with Termination::NonFiniteEnergy and returns the last
// iterate whose energy was finite; callers decide whether that is fatal.
TransferResult style_transfer(const Network& net, const ImageTensor& init, const ImageTensor& content,
                              const StyleTargets& style, const LossWeights& weights,
                              const TransferOptions& options, std::span<const TemporalTerm> temporal = {});

}  // namespace flowstyle
