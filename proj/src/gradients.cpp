#include "gbw/gradients.hpp"

#include <cmath>
#include <vector>

namespace gbw {

namespace {

// Visits d l_bar_c / d z_i for every (pixel, class) pair with a nonzero
// gradient row. grad_row has length C.
template <typename Fn>
void for_each_class_logit_grad(const LogitsBatch& logits, const LabelMap& labels,
                               LossKind kind, double gamma,
                               const std::optional<ConfidenceMap>& confidence,
                               const PerClassLoss& per_class, Fn&& fn) {
  const std::size_t n_classes = logits.n_classes;
  std::vector<double> p(n_classes);
  std::vector<double> row(n_classes);

  std::size_t n_valid = 0;
  if (kind == LossKind::Entropy) {
    for (int y : labels.labels)
      if (y != kIgnoreLabel) ++n_valid;
  }

  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels.labels[i];
    if (y == kIgnoreLabel) continue;
    softmax_row(logits.row(i), n_classes, p.data());

    if (kind == LossKind::Entropy) {
      const double inv_n = 1.0 / static_cast<double>(n_valid);
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double pc = p[c];
        const double factor = inv_n * (-std::log(std::max(pc, 1e-12)) - 1.0) * pc;
        for (std::size_t j = 0; j < n_classes; ++j)
          row[j] = factor * ((j == c ? 1.0 : 0.0) - p[j]);
        fn(c, i, row.data());
      }
      continue;
    }

    const auto c = static_cast<std::size_t>(y);
    const double w = confidence ? confidence->p[i] : 1.0;
    const double inv_count = 1.0 / static_cast<double>(per_class.count[c]);
    const double pc = p[c];

    if (kind == LossKind::CrossEntropy || gamma == 0.0) {
      for (std::size_t j = 0; j < n_classes; ++j)
        row[j] = w * inv_count * (p[j] - (j == c ? 1.0 : 0.0));
    } else {
      // t(q) = (1-q)^gamma * (-log q);  t'(q) = gamma*(1-q)^(gamma-1)*log q
      //                                        - (1-q)^gamma / q
      const double one_m = 1.0 - pc;
      const double dt = gamma * std::pow(one_m, gamma - 1.0) * std::log(std::max(pc, 1e-12)) -
                        std::pow(one_m, gamma) / pc;
      const double factor = w * inv_count * dt * pc;
      for (std::size_t j = 0; j < n_classes; ++j)
        row[j] = factor * ((j == c ? 1.0 : 0.0) - p[j]);
    }
    fn(c, i, row.data());
  }
}

}  // namespace

GradientNorms class_gradient_norms(const LogitsBatch& logits, const LabelMap& labels,
                                   LossKind kind, double gamma,
                                   const std::optional<ConfidenceMap>& confidence) {
  const PerClassLoss per_class = per_class_loss(logits, labels, kind, gamma, confidence);
  const std::size_t n_classes = logits.n_classes;

  GradientNorms out;
  out.g.assign(n_classes, 0.0);
  out.active_mask = per_class.active_mask;

  for_each_class_logit_grad(
      logits, labels, kind, gamma, confidence, per_class,
      [&](std::size_t c, std::size_t, const double* row) {
        for (std::size_t j = 0; j < n_classes; ++j) out.g[c] += row[j] * row[j];
      });
  return out;
}

GradientNorms finite_difference_norms(const LogitsBatch& logits, const LabelMap& labels,
                                      LossKind kind, double gamma,
                                      const std::optional<ConfidenceMap>& confidence,
                                      double step) {
  if (!(step > 0.0)) throw InvalidInput("finite_difference_norms: step must be positive");

  const std::size_t n_classes = logits.n_classes;
  const PerClassLoss base = per_class_loss(logits, labels, kind, gamma, confidence);

  GradientNorms out;
  out.g.assign(n_classes, 0.0);
  out.active_mask = base.active_mask;

  LogitsBatch work = logits;
  for (std::size_t k = 0; k < work.z.size(); ++k) {
    const double saved = work.z[k];
    work.z[k] = saved + step;
    const PerClassLoss plus = per_class_loss(work, labels, kind, gamma, confidence);
    work.z[k] = saved - step;
    const PerClassLoss minus = per_class_loss(work, labels, kind, gamma, confidence);
    work.z[k] = saved;
    for (std::size_t c = 0; c < n_classes; ++c) {
      const double d = (plus.loss[c] - minus.loss[c]) / (2.0 * step);
      out.g[c] += d * d;
    }
  }
  return out;
}

LogitsBatch weighted_loss_logit_gradient(const LogitsBatch& logits, const LabelMap& labels,
                                         LossKind kind, double gamma,
                                         const std::optional<ConfidenceMap>& confidence,
                                         const ClassWeights& weights) {
  if (weights.n_classes() != logits.n_classes)
    throw InvalidInput("weighted_loss_logit_gradient: class dimension mismatch");

  const PerClassLoss per_class = per_class_loss(logits, labels, kind, gamma, confidence);
  const std::size_t n_classes = logits.n_classes;

  LogitsBatch upstream(logits.n_pixels(), n_classes);
  for_each_class_logit_grad(
      logits, labels, kind, gamma, confidence, per_class,
      [&](std::size_t c, std::size_t i, const double* row) {
        double* dst = upstream.row(i);
        for (std::size_t j = 0; j < n_classes; ++j) dst[j] += weights.v[c] * row[j];
      });
  return upstream;
}

}  // namespace gbw
