#include "gbw/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gbw/gradients.hpp"
#include "gbw/losses.hpp"
#include "gbw/rng.hpp"

namespace gbw {

namespace {

struct Batch {
  FeatureBatch features;
  LabelMap labels;
  std::optional<ConfidenceMap> confidence;
};

// Flat pixel pool; a sample is a pixel, so batches draw pixels uniformly
// from the whole training split.
struct PixelPool {
  FeatureBatch features;
  std::vector<int> labels;  // empty when labels are withheld

  static PixelPool build(const Dataset& data, std::size_t n_images, bool with_labels) {
    PixelPool pool;
    pool.features.n_features = data.front().features.n_features;
    for (std::size_t k = 0; k < n_images; ++k) {
      const DenseSample& s = data[k];
      pool.features.x.insert(pool.features.x.end(), s.features.x.begin(),
                             s.features.x.end());
      if (with_labels)
        pool.labels.insert(pool.labels.end(), s.labels.labels.begin(),
                           s.labels.labels.end());
    }
    return pool;
  }

  Batch sample(Rng& rng, std::size_t batch_size) const {
    const std::size_t nf = features.n_features;
    Batch b;
    b.features.n_features = nf;
    b.features.x.reserve(batch_size * nf);
    b.labels.height = 1;
    b.labels.width = batch_size;
    const std::size_t n = features.n_pixels();
    for (std::size_t k = 0; k < batch_size; ++k) {
      const std::size_t idx = rng.uniform_index(n);
      const double* row = features.row(idx);
      b.features.x.insert(b.features.x.end(), row, row + nf);
      if (!labels.empty()) b.labels.labels.push_back(labels[idx]);
    }
    return b;
  }
};

// Combine per-class losses of the source and coeff-scaled target batches.
// A class is active if it is active on either side.
PerClassLoss combine_losses(const PerClassLoss& src, const PerClassLoss* tgt,
                            double coeff) {
  PerClassLoss out = src;
  if (tgt == nullptr) return out;
  for (std::size_t c = 0; c < out.n_classes(); ++c) {
    out.loss[c] += coeff * tgt->loss[c];
    out.count[c] += tgt->count[c];
    out.active_mask[c] = out.active_mask[c] || tgt->active_mask[c];
  }
  return out;
}

}  // namespace

void TrainPlan::validate() const {
  gbw.validate();
  sgd.validate();
  if (!(target_coeff >= 0.0) || !std::isfinite(target_coeff))
    throw InvalidInput("TrainPlan: target_coeff must be finite and >= 0");
  if (pseudo_label_threshold < 0.0 || pseudo_label_threshold > 1.0)
    throw InvalidInput("TrainPlan: pseudo_label_threshold must be in [0,1]");
  if (eval_fraction <= 0.0 || eval_fraction >= 1.0)
    throw InvalidInput("TrainPlan: eval_fraction must be in (0,1)");
}

ConfusionMatrix evaluate(const MicroModel& model, const Dataset& data,
                         std::size_t n_classes) {
  ConfusionMatrix cm(n_classes);
  for (const DenseSample& s : data) {
    auto [pred, conf] = model.pseudo_label(s.features, 0.0);
    accumulate(cm, pred, s.labels);
  }
  return cm;
}

TrainResult train(const TrainPlan& plan, const Dataset& source, const Dataset& target,
                  std::size_t n_classes) {
  plan.validate();
  if (source.empty()) throw InvalidInput("train: empty source dataset");
  if (target.empty()) throw InvalidInput("train: empty target dataset");

  const std::size_t n_features = source.front().features.n_features;

  // held-out target tail, never trained on
  const std::size_t n_eval = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(plan.eval_fraction *
                                            static_cast<double>(target.size()))));
  if (n_eval >= target.size())
    throw InvalidInput("train: target dataset too small for the eval split");
  const std::size_t n_target_train = target.size() - n_eval;

  const DatasetClassStats source_stats = dataset_class_statistics(source, n_classes);

  const PixelPool source_pool = PixelPool::build(source, source.size(), true);
  // target ground truth withheld: the pool carries features only
  const PixelPool target_pool = PixelPool::build(target, n_target_train, false);

  MicroModel model(n_features, plan.hidden, n_classes, plan.seed);
  Rng batch_rng(Rng::substream(plan.seed, "batching"));

  ExperimentRecord record;
  record.plan = plan;
  record.n_classes = n_classes;
  record.steps.reserve(plan.sgd.steps);

  const bool uses_target = plan.regime != Regime::SourceOnly;

  for (std::size_t step = 0; step < plan.sgd.steps; ++step) {
    Batch src = source_pool.sample(batch_rng, plan.sgd.batch_size);
    const LogitsBatch src_logits = model.forward(src.features);
    const PerClassLoss src_loss = per_class_cross_entropy(src_logits, src.labels);

    // target side: pseudo-labels (self-training) or entropy minimization
    std::optional<Batch> tgt;
    std::optional<LogitsBatch> tgt_logits;
    std::optional<PerClassLoss> tgt_loss;
    LossKind tgt_kind = LossKind::CrossEntropy;
    if (uses_target) {
      Batch b = target_pool.sample(batch_rng, plan.sgd.batch_size);
      LogitsBatch logits = model.forward(b.features);
      if (plan.regime == Regime::SelfTraining) {
        auto [labels, conf] = pseudo_label_from_logits(logits, plan.pseudo_label_threshold);
        b.labels = std::move(labels);
        b.confidence = std::move(conf);
      } else {
        tgt_kind = LossKind::Entropy;
        // entropy ignores labels; mark every pixel as participating
        b.labels.labels.assign(b.features.n_pixels(), 0);
        b.labels.width = b.features.n_pixels();
      }
      try {
        tgt_loss = per_class_loss(logits, b.labels, tgt_kind, 0.0, b.confidence);
        tgt = std::move(b);
        tgt_logits = std::move(logits);
      } catch (const EmptyBatch&) {
        // every pseudo-label below threshold; skip the target term this step
      }
    }

    const PerClassLoss combined =
        combine_losses(src_loss, tgt_loss ? &*tgt_loss : nullptr, plan.target_coeff);

    // class weights per the configured strategy
    ClassWeights weights;
    if (plan.strategy == WeightStrategy::Gbw) {
      GradientNorms g = class_gradient_norms(src_logits, src.labels,
                                             LossKind::CrossEntropy);
      if (tgt_logits) {
        const GradientNorms gt = class_gradient_norms(*tgt_logits, tgt->labels, tgt_kind,
                                                      0.0, tgt->confidence);
        const double c2 = plan.target_coeff * plan.target_coeff;
        for (std::size_t c = 0; c < n_classes; ++c) {
          g.g[c] += c2 * gt.g[c];
          g.active_mask[c] = g.active_mask[c] || gt.active_mask[c];
        }
      }
      weights = solve_weights_for_active(g.g, g.active_mask, plan.gbw.lambda);
      record.steps.push_back(StepRecord{step, weights.v, g.g, combined.loss,
                                        combined.count, 0.0});
    } else {
      weights = static_weight_strategy(source_stats, plan.strategy,
                                       plan.strategy == WeightStrategy::LossBased
                                           ? &combined
                                           : nullptr);
      record.steps.push_back(StepRecord{step, weights.v,
                                        std::vector<double>(n_classes, 0.0),
                                        combined.loss, combined.count, 0.0});
    }

    const double total = weighted_total_loss(combined, weights);
    record.steps.back().total_loss = total;
    if (!std::isfinite(total)) throw DivergedRun("train: non-finite loss", step);

    // weighted backward; source and target gradients stack into one update
    LogitsBatch upstream = weighted_loss_logit_gradient(
        src_logits, src.labels, LossKind::CrossEntropy, 0.0, {}, weights);
    FeatureBatch stacked = src.features;
    if (tgt_logits) {
      LogitsBatch tgt_up = weighted_loss_logit_gradient(
          *tgt_logits, tgt->labels, tgt_kind, 0.0, tgt->confidence, weights);
      for (double& u : tgt_up.z) u *= plan.target_coeff;
      upstream.z.insert(upstream.z.end(), tgt_up.z.begin(), tgt_up.z.end());
      stacked.x.insert(stacked.x.end(), tgt->features.x.begin(), tgt->features.x.end());
    }
    try {
      model.backward_and_step(stacked, upstream, plan.sgd);
    } catch (const InvalidInput&) {
      throw DivergedRun("train: parameters diverged", step);
    }
  }

  Dataset eval(target.end() - static_cast<std::ptrdiff_t>(n_eval), target.end());
  record.eval_confusion = evaluate(model, eval, n_classes);
  record.eval_iou = iou(record.eval_confusion);
  record.eval_rp = recall_precision(record.eval_confusion);

  return TrainResult{std::move(model), std::move(record)};
}

AblationTable run_ablation(const TrainPlan& plan_template,
                           const std::vector<double>& lambda_grid,
                           const std::vector<std::uint64_t>& seeds,
                           const Dataset& source, const Dataset& target,
                           std::size_t n_classes) {
  if (lambda_grid.empty() || seeds.empty())
    throw InvalidInput("run_ablation: empty grid");

  AblationTable table;
  table.lambdas = lambda_grid;
  table.seeds = seeds;

  for (std::uint64_t seed : seeds) {
    TrainPlan uniform = plan_template;
    uniform.strategy = WeightStrategy::Uniform;
    uniform.seed = seed;
    const TrainResult r = train(uniform, source, target, n_classes);
    table.uniform_miou_per_seed.push_back(r.record.eval_iou.mean);
  }

  for (double lambda : lambda_grid) {
    for (std::uint64_t seed : seeds) {
      TrainPlan plan = plan_template;
      plan.strategy = WeightStrategy::Gbw;
      plan.gbw.lambda = lambda;
      plan.seed = seed;
      AblationCell cell;
      cell.lambda = lambda;
      cell.seed = seed;
      try {
        const TrainResult r = train(plan, source, target, n_classes);
        cell.miou = r.record.eval_iou.mean;
      } catch (const DivergedRun&) {
        cell.miou = std::numeric_limits<double>::quiet_NaN();
        cell.diverged = true;
      }
      table.cells.push_back(cell);
    }
  }
  return table;
}

}  // namespace gbw
