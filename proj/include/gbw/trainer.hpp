#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gbw/metrics.hpp"
#include "gbw/micro_model.hpp"
#include "gbw/synth_data.hpp"
#include "gbw/types.hpp"
#include "gbw/weighting.hpp"

namespace gbw {

enum class Regime { SourceOnly, SelfTraining, EntropyMin };

struct TrainPlan {
  WeightStrategy strategy = WeightStrategy::Gbw;
  GbwConfig gbw;
  SgdConfig sgd;
  Regime regime = Regime::SourceOnly;
  double target_coeff = 1.0;
  double pseudo_label_threshold = 0.5;
  std::size_t hidden = 0;        // 0 = linear classifier
  double eval_fraction = 0.2;    // held-out tail of the target set
  std::uint64_t seed = 1;

  void validate() const;
};

struct ExperimentRecord {
  TrainPlan plan;
  std::size_t n_classes = 0;
  std::vector<StepRecord> steps;
  ConfusionMatrix eval_confusion;
  IouResult eval_iou;
  RecallPrecision eval_rp;
};

struct TrainResult {
  MicroModel model;
  ExperimentRecord record;
};

// The desk-scale UDA loop: supervised source cross-entropy plus, depending
// on the regime, a confidence-weighted pseudo-label loss or an entropy
// term on unlabeled target batches. One weight vector per step governs the
// combined source + coeff * target per-class losses. Target ground truth
// is only ever touched by the held-out evaluation at the end.
TrainResult train(const TrainPlan& plan, const Dataset& source, const Dataset& target,
                  std::size_t n_classes);

struct AblationCell {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double miou = 0.0;
  bool diverged = false;
};

struct AblationTable {
  std::vector<double> lambdas;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationCell> cells;            // lambda-major
  std::vector<double> uniform_miou_per_seed;  // baseline arm
};

// Runs train() per (lambda, seed) cell plus a uniform-strategy baseline
// per seed for the gain row. Diverged cells are recorded, not fatal.
AblationTable run_ablation(const TrainPlan& plan_template,
                           const std::vector<double>& lambda_grid,
                           const std::vector<std::uint64_t>& seeds,
                           const Dataset& source, const Dataset& target,
                           std::size_t n_classes);

// Evaluate a model on a dataset with ground-truth labels.
ConfusionMatrix evaluate(const MicroModel& model, const Dataset& data,
                         std::size_t n_classes);

}  // namespace gbw
