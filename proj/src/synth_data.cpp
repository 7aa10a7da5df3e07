#include "gbw/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "gbw/json_io.hpp"
#include "gbw/rng.hpp"

namespace gbw {

namespace {

constexpr char kMagic[4] = {'G', 'B', 'W', 'D'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t image_stream(const SceneSpec& spec, Domain domain, std::size_t index) {
  const char* name = domain == Domain::Source ? "data-source" : "data-target";
  return Rng::substream(spec.seed, name) + 0x9e3779b97f4a7c15ULL * (index + 1);
}

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
void read_pod(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
}

}  // namespace

void SceneSpec::validate() const {
  if (n_classes < 2) throw InvalidInput("SceneSpec: need at least 2 classes");
  if (class_pixel_proportions.size() != n_classes)
    throw InvalidInput("SceneSpec: class_pixel_proportions size mismatch");
  double sum = 0.0;
  for (double p : class_pixel_proportions) {
    if (!(p > 0.0)) throw InvalidInput("SceneSpec: class_pixel_proportions must be > 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidInput("SceneSpec: class_pixel_proportions must sum to 1");
  if (width == 0 || height == 0) throw InvalidInput("SceneSpec: zero image dimension");
  if (n_features == 0) throw InvalidInput("SceneSpec: zero feature dimension");
  if (class_means.size() != n_classes)
    throw InvalidInput("SceneSpec: class_means size mismatch");
  for (const auto& m : class_means) {
    if (m.size() != n_features)
      throw InvalidInput("SceneSpec: class mean dimension mismatch");
  }
  if (class_cov_scales.size() != n_classes)
    throw InvalidInput("SceneSpec: class_cov_scales size mismatch");
  for (double s : class_cov_scales) {
    if (!(s > 0.0)) throw InvalidInput("SceneSpec: covariance scales must be > 0");
  }
  if (!target_shift.mean_shift.empty() && target_shift.mean_shift.size() != n_features)
    throw InvalidInput("SceneSpec: target mean_shift dimension mismatch");
  if (!(target_shift.cov_scale > 0.0))
    throw InvalidInput("SceneSpec: target cov_scale must be > 0");
  // every class needs at least one pixel per image
  const double total = static_cast<double>(width * height);
  for (double p : class_pixel_proportions) {
    if (p * total < 1.0)
      throw InvalidInput("SceneSpec: proportions infeasible for the grid size");
  }
}

SceneSpec default_scene_spec(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  spec.class_means.assign(spec.n_classes, std::vector<double>(spec.n_features, 0.0));
  for (std::size_t c = 0; c < spec.n_classes; ++c) spec.class_means[c][c] = 1.5;
  spec.class_cov_scales.assign(spec.n_classes, 1.0);
  spec.target_shift.mean_shift.assign(spec.n_features, 0.35);
  spec.target_shift.cov_scale = 1.15;
  return spec;
}

Dataset generate(const SceneSpec& spec, std::size_t n_images, Domain domain) {
  spec.validate();

  const std::size_t w = spec.width, h = spec.height, total = w * h;
  const std::size_t background = static_cast<std::size_t>(
      std::max_element(spec.class_pixel_proportions.begin(),
                       spec.class_pixel_proportions.end()) -
      spec.class_pixel_proportions.begin());

  // pixel quotas per class, background absorbs the rounding remainder
  std::vector<std::size_t> quota(spec.n_classes);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    if (c == background) continue;
    quota[c] = static_cast<std::size_t>(
        std::llround(spec.class_pixel_proportions[c] * static_cast<double>(total)));
    assigned += quota[c];
  }
  if (assigned >= total) throw InvalidInput("generate: quotas exceed the image");
  quota[background] = total - assigned;

  std::vector<std::size_t> order;  // non-background classes, largest quota first
  for (std::size_t c = 0; c < spec.n_classes; ++c)
    if (c != background) order.push_back(c);
  std::stable_sort(order.begin(), order.end(),
                   [&quota](std::size_t a, std::size_t b) { return quota[a] > quota[b]; });

  const int bg = static_cast<int>(background);
  Dataset out;
  out.reserve(n_images);

  for (std::size_t img = 0; img < n_images; ++img) {
    Rng rng(image_stream(spec, domain, img));

    LabelMap labels;
    labels.width = w;
    labels.height = h;
    labels.labels.assign(total, bg);

    const std::size_t max_rect_w = std::min<std::size_t>(w, w / 2 + 1);
    const std::size_t max_rect_h = std::min<std::size_t>(h, h / 2 + 1);

    for (std::size_t c : order) {
      std::size_t remaining = quota[c];
      std::size_t attempts = 0;
      while (remaining > 0 && attempts < 10000) {
        ++attempts;
        const std::size_t rw = 1 + rng.uniform_index(max_rect_w);
        const std::size_t rh = 1 + rng.uniform_index(max_rect_h);
        const std::size_t x0 = rng.uniform_index(w - rw + 1);
        const std::size_t y0 = rng.uniform_index(h - rh + 1);
        for (std::size_t y = y0; y < y0 + rh && remaining > 0; ++y) {
          for (std::size_t x = x0; x < x0 + rw && remaining > 0; ++x) {
            int& px = labels.labels[y * w + x];
            if (px == bg) {
              px = static_cast<int>(c);
              --remaining;
            }
          }
        }
      }
      // fallback scan: claim leftover background pixels directly
      for (std::size_t k = 0; k < total && remaining > 0; ++k) {
        if (labels.labels[k] == bg) {
          labels.labels[k] = static_cast<int>(c);
          --remaining;
        }
      }
    }

    FeatureBatch features(total, spec.n_features);
    const bool shifted = domain == Domain::Target;
    const double noise_scale = shifted ? spec.target_shift.cov_scale : 1.0;
    for (std::size_t i = 0; i < total; ++i) {
      const auto c = static_cast<std::size_t>(labels.labels[i]);
      double* x = features.row(i);
      const double sigma = spec.class_cov_scales[c] * noise_scale;
      for (std::size_t j = 0; j < spec.n_features; ++j) {
        x[j] = spec.class_means[c][j] + sigma * rng.normal();
        if (shifted && !spec.target_shift.mean_shift.empty())
          x[j] += spec.target_shift.mean_shift[j];
      }
    }

    out.push_back(DenseSample{std::move(features), std::move(labels), domain});
  }
  return out;
}

DatasetClassStats dataset_class_statistics(const Dataset& samples, std::size_t n_classes) {
  if (samples.empty()) throw InvalidInput("dataset_class_statistics: empty dataset");

  DatasetClassStats stats;
  stats.pixel_freq.assign(n_classes, 0.0);
  stats.image_freq.assign(n_classes, 0.0);

  std::size_t total_pixels = 0;
  std::vector<std::size_t> in_image(n_classes);
  for (const DenseSample& s : samples) {
    std::fill(in_image.begin(), in_image.end(), 0);
    for (int y : s.labels.labels) {
      if (y == kIgnoreLabel) continue;
      if (y < 0 || static_cast<std::size_t>(y) >= n_classes)
        throw InvalidInput("dataset_class_statistics: label out of range");
      stats.pixel_freq[static_cast<std::size_t>(y)] += 1.0;
      in_image[static_cast<std::size_t>(y)] = 1;
      ++total_pixels;
    }
    for (std::size_t c = 0; c < n_classes; ++c)
      stats.image_freq[c] += static_cast<double>(in_image[c]);
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    stats.pixel_freq[c] /= static_cast<double>(total_pixels);
    stats.image_freq[c] /= static_cast<double>(samples.size());
  }
  return stats;
}

void save_dataset(const Dataset& data, const SceneSpec& spec,
                  const std::filesystem::path& path) {
  spec.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("save_dataset: cannot open " + path.string());

  f.write(kMagic, 4);
  write_pod(f, kVersion);
  write_pod(f, static_cast<std::uint64_t>(spec.n_classes));
  write_pod(f, static_cast<std::uint64_t>(spec.width));
  write_pod(f, static_cast<std::uint64_t>(spec.height));
  write_pod(f, static_cast<std::uint64_t>(spec.n_features));
  write_pod(f, static_cast<std::uint64_t>(data.size()));
  const std::uint8_t domain_flag =
      data.empty() || data.front().domain == Domain::Source ? 0 : 1;
  write_pod(f, domain_flag);
  write_pod(f, spec.seed);

  for (const DenseSample& s : data) {
    std::vector<std::int32_t> labels(s.labels.labels.begin(), s.labels.labels.end());
    f.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size() * sizeof(std::int32_t)));
    f.write(reinterpret_cast<const char*>(s.features.x.data()),
            static_cast<std::streamsize>(s.features.x.size() * sizeof(double)));
  }
  if (!f) throw InvalidInput("save_dataset: write failed for " + path.string());

  std::ofstream sidecar(path.string() + ".json");
  sidecar << scene_spec_to_json(spec).dump(2) << "\n";
}

std::pair<Dataset, SceneSpec> load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("load_dataset: cannot open " + path.string());

  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw InvalidInput("load_dataset: bad magic in " + path.string());
  std::uint32_t version = 0;
  read_pod(f, version);
  if (version != kVersion) throw InvalidInput("load_dataset: unsupported version");

  std::uint64_t n_classes = 0, w = 0, h = 0, nf = 0, n_images = 0, seed = 0;
  std::uint8_t domain_flag = 0;
  read_pod(f, n_classes);
  read_pod(f, w);
  read_pod(f, h);
  read_pod(f, nf);
  read_pod(f, n_images);
  read_pod(f, domain_flag);
  read_pod(f, seed);

  std::ifstream sidecar(path.string() + ".json");
  if (!sidecar)
    throw InvalidInput("load_dataset: missing sidecar " + path.string() + ".json");
  SceneSpec spec = scene_spec_from_json(nlohmann::json::parse(sidecar));
  if (spec.n_classes != n_classes || spec.width != w || spec.height != h ||
      spec.n_features != nf)
    throw InvalidInput("load_dataset: sidecar disagrees with container header");

  const Domain domain = domain_flag == 0 ? Domain::Source : Domain::Target;
  const std::size_t total = w * h;
  Dataset data;
  data.reserve(n_images);
  for (std::uint64_t img = 0; img < n_images; ++img) {
    DenseSample s;
    s.domain = domain;
    s.labels.width = w;
    s.labels.height = h;
    std::vector<std::int32_t> raw(total);
    f.read(reinterpret_cast<char*>(raw.data()),
           static_cast<std::streamsize>(total * sizeof(std::int32_t)));
    s.labels.labels.assign(raw.begin(), raw.end());
    s.features = FeatureBatch(total, nf);
    f.read(reinterpret_cast<char*>(s.features.x.data()),
           static_cast<std::streamsize>(s.features.x.size() * sizeof(double)));
    data.push_back(std::move(s));
  }
  if (!f) throw InvalidInput("load_dataset: truncated container " + path.string());
  return {std::move(data), std::move(spec)};
}

}  // namespace gbw
