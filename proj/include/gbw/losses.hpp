#pragma once

#include <optional>
#include <vector>

#include "gbw/types.hpp"

namespace gbw {

enum class LossKind { CrossEntropy, Focal, Entropy };

// Numerically stable softmax of one logit row (max subtraction).
void softmax_row(const double* z, std::size_t n, double* out);

// Average cross-entropy per class: loss_c = (1/|y=c|) * sum over pixels
// labeled c of w_i * (-log softmax(z_i)_c), with w_i taken from the
// confidence map when supplied. Ignored pixels excluded everywhere.
PerClassLoss per_class_cross_entropy(const LogitsBatch& logits, const LabelMap& labels,
                                     const std::optional<ConfidenceMap>& confidence = {});

// Average prediction entropy per class channel over all non-ignored pixels:
// loss_c = (1/N) * sum_i -p_ic * log(p_ic). Every pixel contributes to
// every class, so count_c = N.
PerClassLoss per_class_entropy(const LogitsBatch& logits, const LabelMap& labels);

// Focal variant: each pixel term is (1 - p_{i,y_i})^gamma * (-log p_{i,y_i}).
// gamma = 0 reduces to cross-entropy.
PerClassLoss per_class_focal(const LogitsBatch& logits, const LabelMap& labels,
                             double gamma,
                             const std::optional<ConfidenceMap>& confidence = {});

// Dispatch on loss kind.
PerClassLoss per_class_loss(const LogitsBatch& logits, const LabelMap& labels,
                            LossKind kind, double gamma,
                            const std::optional<ConfidenceMap>& confidence = {});

// sum_c v_c * loss_c over active classes.
double weighted_total_loss(const PerClassLoss& per_class, const ClassWeights& weights);

}  // namespace gbw
