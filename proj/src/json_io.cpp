#include "gbw/json_io.hpp"

#include <set>
#include <string>

namespace gbw {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key()))
      throw InvalidInput("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidInput("config: field '" + key + "' has the wrong type");
  }
}

const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::CrossEntropy: return "cross_entropy";
    case LossKind::Focal: return "focal";
    case LossKind::Entropy: return "entropy";
  }
  return "cross_entropy";
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "cross_entropy") return LossKind::CrossEntropy;
  if (name == "focal") return LossKind::Focal;
  if (name == "entropy") return LossKind::Entropy;
  throw InvalidInput("config: unknown loss_kind '" + name + "'");
}

}  // namespace

const char* strategy_name(WeightStrategy s) {
  switch (s) {
    case WeightStrategy::Gbw: return "gbw";
    case WeightStrategy::Uniform: return "uniform";
    case WeightStrategy::InverseImageFrequency: return "inverse_image_frequency";
    case WeightStrategy::InversePixelFrequency: return "inverse_pixel_frequency";
    case WeightStrategy::LossBased: return "loss_based";
  }
  return "uniform";
}

WeightStrategy strategy_from_name(const std::string& name) {
  if (name == "gbw") return WeightStrategy::Gbw;
  if (name == "uniform") return WeightStrategy::Uniform;
  if (name == "inverse_image_frequency") return WeightStrategy::InverseImageFrequency;
  if (name == "inverse_pixel_frequency") return WeightStrategy::InversePixelFrequency;
  if (name == "loss_based") return WeightStrategy::LossBased;
  throw InvalidInput("config: unknown strategy '" + name + "'");
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::SourceOnly: return "source_only";
    case Regime::SelfTraining: return "self_training";
    case Regime::EntropyMin: return "entropy_min";
  }
  return "source_only";
}

Regime regime_from_name(const std::string& name) {
  if (name == "source_only") return Regime::SourceOnly;
  if (name == "self_training") return Regime::SelfTraining;
  if (name == "entropy_min") return Regime::EntropyMin;
  throw InvalidInput("config: unknown regime '" + name + "'");
}

json scene_spec_to_json(const SceneSpec& spec) {
  json j;
  j["n_classes"] = spec.n_classes;
  j["class_pixel_proportions"] = spec.class_pixel_proportions;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["n_features"] = spec.n_features;
  j["class_means"] = spec.class_means;
  j["class_cov_scales"] = spec.class_cov_scales;
  j["target_mean_shift"] = spec.target_shift.mean_shift;
  j["target_cov_scale"] = spec.target_shift.cov_scale;
  j["seed"] = spec.seed;
  return j;
}

SceneSpec scene_spec_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"n_classes", "class_pixel_proportions", "width", "height",
                       "n_features", "class_means", "class_cov_scales",
                       "target_mean_shift", "target_cov_scale", "seed"},
                      "scene spec");
  SceneSpec defaults = default_scene_spec(get_or<std::uint64_t>(j, "seed", 1));
  SceneSpec spec;
  spec.seed = defaults.seed;
  spec.n_classes = get_or<std::size_t>(j, "n_classes", defaults.n_classes);
  spec.class_pixel_proportions = get_or(j, "class_pixel_proportions",
                                        defaults.class_pixel_proportions);
  spec.width = get_or<std::size_t>(j, "width", defaults.width);
  spec.height = get_or<std::size_t>(j, "height", defaults.height);
  spec.n_features = get_or<std::size_t>(j, "n_features", defaults.n_features);
  if (j.contains("class_means")) {
    spec.class_means = j.at("class_means").get<std::vector<std::vector<double>>>();
  } else if (spec.n_classes == defaults.n_classes &&
             spec.n_features == defaults.n_features) {
    spec.class_means = defaults.class_means;
  } else {
    spec.class_means.assign(spec.n_classes, std::vector<double>(spec.n_features, 0.0));
    for (std::size_t c = 0; c < spec.n_classes; ++c)
      spec.class_means[c][c % spec.n_features] = 1.5;
  }
  spec.class_cov_scales =
      get_or(j, "class_cov_scales", std::vector<double>(spec.n_classes, 1.0));
  spec.target_shift.mean_shift = get_or(j, "target_mean_shift",
                                        spec.n_features == defaults.n_features
                                            ? defaults.target_shift.mean_shift
                                            : std::vector<double>{});
  spec.target_shift.cov_scale =
      get_or<double>(j, "target_cov_scale", defaults.target_shift.cov_scale);
  spec.validate();
  return spec;
}

json train_plan_to_json(const TrainPlan& plan) {
  json j;
  j["strategy"] = strategy_name(plan.strategy);
  j["lambda"] = plan.gbw.lambda;
  j["loss_kind"] = loss_kind_name(plan.gbw.loss_kind);
  j["focal_gamma"] = plan.gbw.focal_gamma;
  j["use_confidence"] = plan.gbw.use_confidence;
  j["learning_rate"] = plan.sgd.learning_rate;
  j["steps"] = plan.sgd.steps;
  j["batch_size"] = plan.sgd.batch_size;
  j["regime"] = regime_name(plan.regime);
  j["target_coeff"] = plan.target_coeff;
  j["pseudo_label_threshold"] = plan.pseudo_label_threshold;
  j["hidden"] = plan.hidden;
  j["eval_fraction"] = plan.eval_fraction;
  j["seed"] = plan.seed;
  return j;
}

TrainPlan train_plan_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"strategy", "lambda", "loss_kind", "focal_gamma", "use_confidence",
                       "learning_rate", "steps", "batch_size", "regime", "target_coeff",
                       "pseudo_label_threshold", "hidden", "eval_fraction", "seed"},
                      "train plan");
  TrainPlan plan;
  plan.strategy = strategy_from_name(
      get_or<std::string>(j, "strategy", strategy_name(plan.strategy)));
  plan.gbw.lambda = get_or<double>(j, "lambda", plan.gbw.lambda);
  plan.gbw.loss_kind = loss_kind_from_name(
      get_or<std::string>(j, "loss_kind", loss_kind_name(plan.gbw.loss_kind)));
  plan.gbw.focal_gamma = get_or<double>(j, "focal_gamma", plan.gbw.focal_gamma);
  plan.gbw.use_confidence = get_or<bool>(j, "use_confidence", plan.gbw.use_confidence);
  plan.sgd.learning_rate = get_or<double>(j, "learning_rate", plan.sgd.learning_rate);
  plan.sgd.steps = get_or<std::size_t>(j, "steps", plan.sgd.steps);
  plan.sgd.batch_size = get_or<std::size_t>(j, "batch_size", plan.sgd.batch_size);
  plan.regime =
      regime_from_name(get_or<std::string>(j, "regime", regime_name(plan.regime)));
  plan.target_coeff = get_or<double>(j, "target_coeff", plan.target_coeff);
  plan.pseudo_label_threshold =
      get_or<double>(j, "pseudo_label_threshold", plan.pseudo_label_threshold);
  plan.hidden = get_or<std::size_t>(j, "hidden", plan.hidden);
  plan.eval_fraction = get_or<double>(j, "eval_fraction", plan.eval_fraction);
  plan.seed = get_or<std::uint64_t>(j, "seed", plan.seed);
  plan.validate();
  return plan;
}

json metrics_to_json(const ExperimentRecord& record) {
  json j;
  j["n_classes"] = record.n_classes;
  j["miou"] = record.eval_iou.mean;

  json per_class = json::array();
  for (std::size_t c = 0; c < record.n_classes; ++c) {
    json e;
    e["class"] = c;
    e["iou"] = record.eval_iou.per_class[c].defined
                   ? json(record.eval_iou.per_class[c].value)
                   : json(nullptr);
    e["recall"] = record.eval_rp.recall[c].defined
                      ? json(record.eval_rp.recall[c].value)
                      : json(nullptr);
    e["precision"] = record.eval_rp.precision[c].defined
                         ? json(record.eval_rp.precision[c].value)
                         : json(nullptr);
    per_class.push_back(e);
  }
  j["per_class"] = per_class;
  j["confusion"] = record.eval_confusion.counts;
  j["steps"] = record.steps.size();
  return j;
}

}  // namespace gbw
