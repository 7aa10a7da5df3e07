#pragma once

#include <optional>
#include <vector>

#include "gbw/gradients.hpp"
#include "gbw/losses.hpp"
#include "gbw/qp_solver.hpp"
#include "gbw/types.hpp"

namespace gbw {

struct GbwConfig {
  double lambda = 1.0;
  LossKind loss_kind = LossKind::CrossEntropy;
  double focal_gamma = 2.0;
  bool use_confidence = false;

  void validate() const {
    if (!(lambda > 0.0)) throw InvalidInput("GbwConfig: lambda must be > 0");
    if (focal_gamma < 0.0) throw InvalidInput("GbwConfig: focal_gamma must be >= 0");
  }
};

struct StepRecord {
  std::size_t step = 0;
  std::vector<double> weights;
  std::vector<double> grad_norms;
  std::vector<double> per_class_loss;
  std::vector<std::size_t> counts;
  double total_loss = 0.0;
};

struct GbwStepResult {
  ClassWeights weights;
  double total_loss = 0.0;
  StepRecord record;
};

// Solve the weight QP restricted to active classes. target_sum is the
// active-class count; absent classes get the neutral weight 1 and stay out
// of the solve.
ClassWeights solve_weights_for_active(const std::vector<double>& g,
                                      const std::vector<bool>& active, double lambda);

// One GBW step on a forward pass: per-class losses, gradient norms, QP
// solve, weighted total loss. Weights are constants for the subsequent
// backward pass.
GbwStepResult gbw_step(const LogitsBatch& logits, const LabelMap& labels,
                       const std::optional<ConfidenceMap>& confidence,
                       const GbwConfig& config);

enum class WeightStrategy {
  Gbw,
  Uniform,
  InverseImageFrequency,
  InversePixelFrequency,
  LossBased,
};

struct DatasetClassStats {
  std::vector<double> pixel_freq;
  std::vector<double> image_freq;
};

// Static weighting baselines. Results are normalized so the weights sum to
// the class count. loss_based requires the current step's per-class losses.
ClassWeights static_weight_strategy(const DatasetClassStats& stats, WeightStrategy kind,
                                    const PerClassLoss* current_loss = nullptr);

}  // namespace gbw
