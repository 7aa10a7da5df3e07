#include "gbw/weighting.hpp"

#include <cmath>

namespace gbw {

ClassWeights solve_weights_for_active(const std::vector<double>& g,
                                      const std::vector<bool>& active, double lambda) {
  const std::size_t n_classes = g.size();
  if (active.size() != n_classes)
    throw InvalidInput("solve_weights_for_active: mask dimension mismatch");

  std::vector<double> g_active;
  std::vector<std::size_t> index;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (active[c]) {
      g_active.push_back(g[c]);
      index.push_back(c);
    }
  }

  ClassWeights out;
  out.v.assign(n_classes, 1.0);  // absent classes keep the neutral weight
  out.active_mask = active;
  if (g_active.empty()) return out;

  QpProblem problem;
  problem.g = std::move(g_active);
  problem.lambda = lambda;
  problem.target_sum = static_cast<double>(index.size());
  const ClassWeights solved = solve_gbw_qp(problem);
  for (std::size_t k = 0; k < index.size(); ++k) out.v[index[k]] = solved.v[k];
  return out;
}

GbwStepResult gbw_step(const LogitsBatch& logits, const LabelMap& labels,
                       const std::optional<ConfidenceMap>& confidence,
                       const GbwConfig& config) {
  config.validate();
  const std::optional<ConfidenceMap> no_conf;
  const std::optional<ConfidenceMap>& conf = config.use_confidence ? confidence : no_conf;

  const PerClassLoss per_class =
      per_class_loss(logits, labels, config.loss_kind, config.focal_gamma, conf);
  const GradientNorms norms =
      class_gradient_norms(logits, labels, config.loss_kind, config.focal_gamma, conf);

  GbwStepResult result;
  result.weights = solve_weights_for_active(norms.g, norms.active_mask, config.lambda);
  result.total_loss = weighted_total_loss(per_class, result.weights);

  result.record.weights = result.weights.v;
  result.record.grad_norms = norms.g;
  result.record.per_class_loss = per_class.loss;
  result.record.counts = per_class.count;
  result.record.total_loss = result.total_loss;
  return result;
}

ClassWeights static_weight_strategy(const DatasetClassStats& stats, WeightStrategy kind,
                                    const PerClassLoss* current_loss) {
  const std::size_t n_classes = stats.pixel_freq.size();
  if (stats.image_freq.size() != n_classes)
    throw InvalidInput("static_weight_strategy: stats dimension mismatch");

  ClassWeights out;
  out.v.assign(n_classes, 1.0);
  out.active_mask.assign(n_classes, true);

  if (kind == WeightStrategy::Uniform) return out;
  if (kind == WeightStrategy::Gbw)
    throw InvalidInput("static_weight_strategy: gbw is not a static strategy");

  std::vector<double> raw(n_classes, 0.0);
  std::vector<bool> present(n_classes, false);

  if (kind == WeightStrategy::LossBased) {
    if (current_loss == nullptr || current_loss->n_classes() != n_classes)
      throw InvalidInput("static_weight_strategy: loss_based needs a per-class loss");
    for (std::size_t c = 0; c < n_classes; ++c) {
      present[c] = current_loss->active_mask[c];
      raw[c] = current_loss->loss[c];
    }
  } else {
    for (std::size_t c = 0; c < n_classes; ++c) {
      const bool has_pixels = stats.pixel_freq[c] > 0.0;
      const bool has_images = stats.image_freq[c] > 0.0;
      present[c] = has_pixels || has_images;
      if (!present[c]) continue;
      const double freq = kind == WeightStrategy::InversePixelFrequency
                              ? stats.pixel_freq[c]
                              : stats.image_freq[c];
      if (freq <= 0.0)
        throw InvalidInput("static_weight_strategy: zero frequency for a present class");
      raw[c] = 1.0 / freq;
    }
  }

  double raw_sum = 0.0;
  std::size_t n_present = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (present[c]) {
      raw_sum += raw[c];
      ++n_present;
    } else {
      out.active_mask[c] = false;
    }
  }
  if (n_present == 0) return out;
  if (raw_sum <= 0.0) {
    // all-zero losses: nothing to weight, stay uniform
    for (std::size_t c = 0; c < n_classes; ++c)
      if (present[c]) out.v[c] = 1.0;
    return out;
  }

  const double scale = static_cast<double>(n_present) / raw_sum;
  for (std::size_t c = 0; c < n_classes; ++c)
    if (present[c]) out.v[c] = raw[c] * scale;
  return out;
}

}  // namespace gbw
