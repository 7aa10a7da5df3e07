#pragma once

#include <functional>
#include <optional>

#include "gbw/losses.hpp"
#include "gbw/types.hpp"

namespace gbw {

// Analytic squared gradient norms g_c = ||d l_bar_c / d z||^2 with z the
// pre-activation logits of the batch.
//
// Closed forms per pixel i (p = softmax(z_i), w_i the confidence weight,
// n_c the pixel count of class c):
//   cross-entropy, y_i = c:  d/dz_i = w_i * (p - e_c) / n_c
//   focal, y_i = c:          d/dz_i = (w_i/n_c) * t'(p_c) * p_c*(e_c - p)
//                            with t(q) = (1-q)^gamma * (-log q)
//   entropy, every c:        d/dz_i = (1/N) * (-log p_c - 1) * p_c*(e_c - p)
// Pixels not labeled c contribute nothing for cross-entropy and focal.
GradientNorms class_gradient_norms(const LogitsBatch& logits, const LabelMap& labels,
                                   LossKind kind, double gamma = 0.0,
                                   const std::optional<ConfidenceMap>& confidence = {});

// Central-difference estimate of the same quantity; verification oracle.
GradientNorms finite_difference_norms(const LogitsBatch& logits, const LabelMap& labels,
                                      LossKind kind, double gamma,
                                      const std::optional<ConfidenceMap>& confidence,
                                      double step);

// Gradient of the weighted total loss sum_c v_c * l_bar_c with respect to
// every logit entry; the upstream tensor for the model backward pass.
LogitsBatch weighted_loss_logit_gradient(const LogitsBatch& logits, const LabelMap& labels,
                                         LossKind kind, double gamma,
                                         const std::optional<ConfidenceMap>& confidence,
                                         const ClassWeights& weights);

}  // namespace gbw
