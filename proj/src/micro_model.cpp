#include "gbw/micro_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "gbw/losses.hpp"

namespace gbw {

namespace {

constexpr char kMagic[4] = {'G', 'B', 'W', 'M'};
constexpr std::uint32_t kVersion = 1;

void init_uniform(std::vector<double>& p, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : p) v = rng.uniform(-bound, bound);
}

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
void read_pod(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
}

void write_array(std::ofstream& f, const std::vector<double>& a) {
  f.write(reinterpret_cast<const char*>(a.data()),
          static_cast<std::streamsize>(a.size() * sizeof(double)));
}

void read_array(std::ifstream& f, std::vector<double>& a, std::size_t n) {
  a.resize(n);
  f.read(reinterpret_cast<char*>(a.data()),
         static_cast<std::streamsize>(n * sizeof(double)));
}

}  // namespace

MicroModel::MicroModel(std::size_t n_features, std::size_t hidden, std::size_t n_classes,
                       std::uint64_t seed)
    : n_features_(n_features), hidden_(hidden), n_classes_(n_classes), seed_(seed) {
  if (n_features == 0 || n_classes == 0)
    throw InvalidInput("MicroModel: zero feature or class dimension");

  Rng rng(Rng::substream(seed, "init"));
  if (linear()) {
    w2_.resize(n_classes_ * n_features_);
    b2_.resize(n_classes_);
    init_uniform(w2_, n_features_, rng);
    init_uniform(b2_, n_features_, rng);
  } else {
    w1_.resize(hidden_ * n_features_);
    b1_.resize(hidden_);
    w2_.resize(n_classes_ * hidden_);
    b2_.resize(n_classes_);
    init_uniform(w1_, n_features_, rng);
    init_uniform(b1_, n_features_, rng);
    init_uniform(w2_, hidden_, rng);
    init_uniform(b2_, hidden_, rng);
  }
}

std::size_t MicroModel::parameter_count() const {
  return w1_.size() + b1_.size() + w2_.size() + b2_.size();
}

LogitsBatch MicroModel::forward(const FeatureBatch& features) const {
  if (features.n_features != n_features_)
    throw InvalidInput("forward: feature dimension mismatch");

  const std::size_t n = features.n_pixels();
  LogitsBatch out(n, n_classes_);

  if (linear()) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = features.row(i);
      double* z = out.row(i);
      for (std::size_t c = 0; c < n_classes_; ++c) {
        double acc = b2_[c];
        const double* w = w2_.data() + c * n_features_;
        for (std::size_t j = 0; j < n_features_; ++j) acc += w[j] * x[j];
        z[c] = acc;
      }
    }
    return out;
  }

  std::vector<double> h(hidden_);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = features.row(i);
    for (std::size_t k = 0; k < hidden_; ++k) {
      double acc = b1_[k];
      const double* w = w1_.data() + k * n_features_;
      for (std::size_t j = 0; j < n_features_; ++j) acc += w[j] * x[j];
      h[k] = acc > 0.0 ? acc : 0.0;
    }
    double* z = out.row(i);
    for (std::size_t c = 0; c < n_classes_; ++c) {
      double acc = b2_[c];
      const double* w = w2_.data() + c * hidden_;
      for (std::size_t k = 0; k < hidden_; ++k) acc += w[k] * h[k];
      z[c] = acc;
    }
  }
  return out;
}

void MicroModel::backward_and_step(const FeatureBatch& features, const LogitsBatch& upstream,
                                   const SgdConfig& config) {
  config.validate();
  if (features.n_features != n_features_)
    throw InvalidInput("backward_and_step: feature dimension mismatch");
  if (upstream.n_classes != n_classes_ || upstream.n_pixels() != features.n_pixels())
    throw InvalidInput("backward_and_step: upstream shape mismatch");
  for (double u : upstream.z) {
    if (!std::isfinite(u)) throw InvalidInput("backward_and_step: non-finite upstream");
  }

  const std::size_t n = features.n_pixels();
  const double eta = config.learning_rate;

  if (linear()) {
    std::vector<double> gw(w2_.size(), 0.0), gb(b2_.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = features.row(i);
      const double* u = upstream.row(i);
      for (std::size_t c = 0; c < n_classes_; ++c) {
        gb[c] += u[c];
        double* g = gw.data() + c * n_features_;
        for (std::size_t j = 0; j < n_features_; ++j) g[j] += u[c] * x[j];
      }
    }
    for (std::size_t k = 0; k < w2_.size(); ++k) w2_[k] -= eta * gw[k];
    for (std::size_t k = 0; k < b2_.size(); ++k) b2_[k] -= eta * gb[k];
    return;
  }

  std::vector<double> gw1(w1_.size(), 0.0), gb1(b1_.size(), 0.0);
  std::vector<double> gw2(w2_.size(), 0.0), gb2(b2_.size(), 0.0);
  std::vector<double> h(hidden_), dh(hidden_);

  for (std::size_t i = 0; i < n; ++i) {
    const double* x = features.row(i);
    const double* u = upstream.row(i);

    for (std::size_t k = 0; k < hidden_; ++k) {
      double acc = b1_[k];
      const double* w = w1_.data() + k * n_features_;
      for (std::size_t j = 0; j < n_features_; ++j) acc += w[j] * x[j];
      h[k] = acc > 0.0 ? acc : 0.0;
    }

    for (std::size_t c = 0; c < n_classes_; ++c) {
      gb2[c] += u[c];
      double* g = gw2.data() + c * hidden_;
      for (std::size_t k = 0; k < hidden_; ++k) g[k] += u[c] * h[k];
    }

    for (std::size_t k = 0; k < hidden_; ++k) {
      double acc = 0.0;
      for (std::size_t c = 0; c < n_classes_; ++c) acc += u[c] * w2_[c * hidden_ + k];
      dh[k] = h[k] > 0.0 ? acc : 0.0;  // rectifier gate
    }

    for (std::size_t k = 0; k < hidden_; ++k) {
      gb1[k] += dh[k];
      double* g = gw1.data() + k * n_features_;
      for (std::size_t j = 0; j < n_features_; ++j) g[j] += dh[k] * x[j];
    }
  }

  for (std::size_t k = 0; k < w1_.size(); ++k) w1_[k] -= eta * gw1[k];
  for (std::size_t k = 0; k < b1_.size(); ++k) b1_[k] -= eta * gb1[k];
  for (std::size_t k = 0; k < w2_.size(); ++k) w2_[k] -= eta * gw2[k];
  for (std::size_t k = 0; k < b2_.size(); ++k) b2_[k] -= eta * gb2[k];

  for (const auto* p : {&w1_, &b1_, &w2_, &b2_}) {
    for (double v : *p) {
      if (!std::isfinite(v)) throw InvalidInput("backward_and_step: parameters diverged");
    }
  }
}

std::pair<LabelMap, ConfidenceMap> MicroModel::pseudo_label(const FeatureBatch& features,
                                                            double threshold) const {
  return pseudo_label_from_logits(forward(features), threshold);
}

std::pair<LabelMap, ConfidenceMap> pseudo_label_from_logits(const LogitsBatch& logits,
                                                            double threshold) {
  if (threshold < 0.0 || threshold > 1.0)
    throw InvalidInput("pseudo_label: threshold must be in [0,1]");
  const std::size_t n = logits.n_pixels();
  const std::size_t n_classes = logits.n_classes;

  LabelMap labels;
  labels.width = n;
  labels.height = 1;
  labels.labels.resize(n);
  ConfidenceMap conf;
  conf.p.resize(n);

  std::vector<double> p(n_classes);
  for (std::size_t i = 0; i < n; ++i) {
    softmax_row(logits.row(i), n_classes, p.data());
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_classes; ++c)
      if (p[c] > p[best]) best = c;
    conf.p[i] = p[best];
    labels.labels[i] = p[best] < threshold ? kIgnoreLabel : static_cast<int>(best);
  }
  return {std::move(labels), std::move(conf)};
}

void MicroModel::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("save: cannot open " + path.string());
  f.write(kMagic, 4);
  write_pod(f, kVersion);
  write_pod(f, static_cast<std::uint64_t>(n_features_));
  write_pod(f, static_cast<std::uint64_t>(hidden_));
  write_pod(f, static_cast<std::uint64_t>(n_classes_));
  write_pod(f, seed_);
  write_array(f, w1_);
  write_array(f, b1_);
  write_array(f, w2_);
  write_array(f, b2_);
  if (!f) throw InvalidInput("save: write failed for " + path.string());
}

MicroModel MicroModel::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("load: cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw InvalidInput("load: bad magic in " + path.string());
  std::uint32_t version = 0;
  read_pod(f, version);
  if (version != kVersion) throw InvalidInput("load: unsupported checkpoint version");

  std::uint64_t nf = 0, h = 0, nc = 0, seed = 0;
  read_pod(f, nf);
  read_pod(f, h);
  read_pod(f, nc);
  read_pod(f, seed);

  MicroModel m;
  m.n_features_ = nf;
  m.hidden_ = h;
  m.n_classes_ = nc;
  m.seed_ = seed;
  if (h == 0) {
    read_array(f, m.w2_, nc * nf);
    read_array(f, m.b2_, nc);
  } else {
    read_array(f, m.w1_, h * nf);
    read_array(f, m.b1_, h);
    read_array(f, m.w2_, nc * h);
    read_array(f, m.b2_, nc);
  }
  if (!f) throw InvalidInput("load: truncated checkpoint " + path.string());
  return m;
}

}  // namespace gbw
