// gbw: generate / train / ablate / report for desk-scale class-weighting
// experiments. Exit codes: 0 ok, 2 config error, 3 diverged run, 4 I/O error.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "gbw/json_io.hpp"
#include "gbw/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("GBW_LOG_LEVEL");
  if (env == nullptr) return LogLevel::Info;
  const std::string v = env;
  if (v == "error") return LogLevel::Error;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << "[gbw] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[gbw:debug] " << msg << "\n";
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config JSON: ") + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

json make_manifest(const std::string& config_path, const json& resolved,
                   const fs::path& out_dir) {
  json m;
  m["tool_version"] = kToolVersion;
  m["config_path"] = config_path;
  m["resolved"] = resolved;
  m["output_dir"] = out_dir.string();
  const auto now = std::chrono::system_clock::now();
  m["timestamp_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  return m;
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed_override = -1;
  unsigned parallel = 1;
};

// ---------------------------------------------------------------- generate

int cmd_generate(const CommonOpts& opts) {
  json cfg = load_config(opts.config_path);
  gbw::SceneSpec spec = gbw::scene_spec_from_json(cfg.value("scene", json::object()));
  if (opts.seed_override >= 0) {
    json scene = cfg.value("scene", json::object());
    scene["seed"] = static_cast<std::uint64_t>(opts.seed_override);
    spec = gbw::scene_spec_from_json(scene);
  }
  const auto n_source = cfg.value("n_source_images", std::size_t{50});
  const auto n_target = cfg.value("n_target_images", std::size_t{50});

  const fs::path out(opts.out_dir);
  fs::create_directories(out);

  log_info("generating " + std::to_string(n_source) + " source + " +
           std::to_string(n_target) + " target images");
  const gbw::Dataset source = gbw::generate(spec, n_source, gbw::Domain::Source);
  const gbw::Dataset target = gbw::generate(spec, n_target, gbw::Domain::Target);
  gbw::save_dataset(source, spec, out / "source.bin");
  gbw::save_dataset(target, spec, out / "target.bin");

  json resolved;
  resolved["scene"] = gbw::scene_spec_to_json(spec);
  resolved["n_source_images"] = n_source;
  resolved["n_target_images"] = n_target;
  write_json_file(out / "manifest.json", make_manifest(opts.config_path, resolved, out));
  log_info("wrote " + (out / "source.bin").string() + " and target.bin");
  return 0;
}

// ------------------------------------------------------------------- train

void write_steps_csv(const fs::path& path, const gbw::ExperimentRecord& record) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "step,class,weight,grad_norm,loss\n";
  f.precision(17);
  for (const gbw::StepRecord& s : record.steps) {
    for (std::size_t c = 0; c < s.weights.size(); ++c) {
      f << s.step << "," << c << "," << s.weights[c] << "," << s.grad_norms[c] << ","
        << s.per_class_loss[c] << "\n";
    }
  }
}

int cmd_train(const CommonOpts& opts) {
  json cfg = load_config(opts.config_path);
  if (!cfg.contains("data_dir")) throw ConfigError("config: missing field 'data_dir'");
  const fs::path data_dir(cfg.at("data_dir").get<std::string>());

  json plan_json = cfg.value("plan", json::object());
  if (opts.seed_override >= 0)
    plan_json["seed"] = static_cast<std::uint64_t>(opts.seed_override);
  const gbw::TrainPlan plan = gbw::train_plan_from_json(plan_json);

  if (!fs::exists(data_dir / "source.bin") || !fs::exists(data_dir / "target.bin"))
    throw IoError("dataset containers not found under " + data_dir.string());

  auto [source, spec] = gbw::load_dataset(data_dir / "source.bin");
  auto [target, spec_t] = gbw::load_dataset(data_dir / "target.bin");
  log_debug("loaded " + std::to_string(source.size()) + " source images");

  log_info("training: strategy=" + std::string(gbw::strategy_name(plan.strategy)) +
           " regime=" + gbw::regime_name(plan.regime) +
           " seed=" + std::to_string(plan.seed));
  gbw::TrainResult result = gbw::train(plan, source, target, spec.n_classes);

  const fs::path out(opts.out_dir);
  fs::create_directories(out);
  json resolved;
  resolved["data_dir"] = data_dir.string();
  resolved["plan"] = gbw::train_plan_to_json(plan);
  write_json_file(out / "manifest.json", make_manifest(opts.config_path, resolved, out));
  write_steps_csv(out / "steps.csv", result.record);

  json metrics = gbw::metrics_to_json(result.record);
  const gbw::DatasetClassStats stats =
      gbw::dataset_class_statistics(source, spec.n_classes);
  metrics["source_pixel_freq"] = stats.pixel_freq;
  write_json_file(out / "metrics.json", metrics);
  result.model.save(out / "model.bin");

  std::ostringstream msg;
  msg << "target mIoU " << result.record.eval_iou.mean;
  log_info(msg.str());
  return 0;
}

// ------------------------------------------------------------------ ablate

int cmd_ablate(const CommonOpts& opts) {
  json cfg = load_config(opts.config_path);
  if (!cfg.contains("data_dir")) throw ConfigError("config: missing field 'data_dir'");
  const fs::path data_dir(cfg.at("data_dir").get<std::string>());
  const auto lambda_grid = cfg.value("lambda_grid", std::vector<double>{1.0});
  std::vector<std::uint64_t> seeds =
      cfg.value("seeds", std::vector<std::uint64_t>{1, 2, 3});
  if (opts.seed_override >= 0)
    seeds = {static_cast<std::uint64_t>(opts.seed_override)};
  const gbw::TrainPlan plan = gbw::train_plan_from_json(cfg.value("plan", json::object()));

  auto [source, spec] = gbw::load_dataset(data_dir / "source.bin");
  auto [target, spec_t] = gbw::load_dataset(data_dir / "target.bin");

  gbw::AblationTable table;
  table.lambdas = lambda_grid;
  table.seeds = seeds;
  table.uniform_miou_per_seed.resize(seeds.size());
  table.cells.resize(lambda_grid.size() * seeds.size());

  // cells are independent; fan them over a small worker pool
  struct Cell {
    bool uniform;
    std::size_t li, si;
  };
  std::vector<Cell> work;
  for (std::size_t si = 0; si < seeds.size(); ++si) work.push_back({true, 0, si});
  for (std::size_t li = 0; li < lambda_grid.size(); ++li)
    for (std::size_t si = 0; si < seeds.size(); ++si) work.push_back({false, li, si});

  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      Cell cell{};
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= work.size()) return;
        cell = work[next++];
      }
      gbw::TrainPlan p = plan;
      p.seed = seeds[cell.si];
      if (cell.uniform) {
        p.strategy = gbw::WeightStrategy::Uniform;
        const gbw::TrainResult r = gbw::train(p, source, target, spec.n_classes);
        table.uniform_miou_per_seed[cell.si] = r.record.eval_iou.mean;
      } else {
        p.strategy = gbw::WeightStrategy::Gbw;
        p.gbw.lambda = lambda_grid[cell.li];
        gbw::AblationCell out;
        out.lambda = p.gbw.lambda;
        out.seed = p.seed;
        try {
          const gbw::TrainResult r = gbw::train(p, source, target, spec.n_classes);
          out.miou = r.record.eval_iou.mean;
        } catch (const gbw::DivergedRun&) {
          out.miou = std::numeric_limits<double>::quiet_NaN();
          out.diverged = true;
        }
        table.cells[cell.li * seeds.size() + cell.si] = out;
      }
    }
  };

  const unsigned n_workers = std::max(1u, opts.parallel);
  std::vector<std::thread> threads;
  for (unsigned k = 0; k < n_workers; ++k) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  const fs::path out(opts.out_dir);
  fs::create_directories(out);
  json resolved;
  resolved["data_dir"] = data_dir.string();
  resolved["plan"] = gbw::train_plan_to_json(plan);
  resolved["lambda_grid"] = lambda_grid;
  resolved["seeds"] = seeds;
  write_json_file(out / "manifest.json", make_manifest(opts.config_path, resolved, out));

  // Table-5-shaped CSV: lambda columns, mean-mIoU row, gain vs uniform row
  std::ofstream f(out / "ablation.csv");
  if (!f) throw IoError("cannot write ablation.csv");
  f.precision(17);
  f << "lambda";
  for (double l : lambda_grid) f << "," << l;
  f << "\nmiou";
  double uniform_mean = 0.0;
  for (double u : table.uniform_miou_per_seed) uniform_mean += u;
  uniform_mean /= static_cast<double>(seeds.size());
  std::vector<double> means;
  for (std::size_t li = 0; li < lambda_grid.size(); ++li) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const gbw::AblationCell& c = table.cells[li * seeds.size() + si];
      if (!c.diverged) {
        sum += c.miou;
        ++n;
      }
    }
    means.push_back(n > 0 ? sum / static_cast<double>(n)
                          : std::numeric_limits<double>::quiet_NaN());
    f << "," << means.back();
  }
  f << "\ngain_vs_uniform";
  for (double m : means) f << "," << (m - uniform_mean);
  f << "\n";

  // per-cell detail
  std::ofstream detail(out / "ablation_cells.csv");
  detail.precision(17);
  detail << "lambda,seed,miou,diverged\n";
  for (const gbw::AblationCell& c : table.cells)
    detail << c.lambda << "," << c.seed << "," << c.miou << "," << (c.diverged ? 1 : 0)
           << "\n";
  detail << "uniform,,," << "\n";
  for (std::size_t si = 0; si < seeds.size(); ++si)
    detail << "uniform_baseline," << seeds[si] << "," << table.uniform_miou_per_seed[si]
           << ",0\n";
  return 0;
}

// ------------------------------------------------------------------ report

struct RunData {
  fs::path dir;
  json manifest;
  json metrics;
  // per class: mean/std/max of logged weights
  std::vector<double> w_mean, w_std, w_max;
  std::size_t n_classes = 0;
};

RunData load_run(const fs::path& dir) {
  RunData run;
  run.dir = dir;
  {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw IoError("missing manifest.json in " + dir.string());
    run.manifest = json::parse(f);
  }
  {
    std::ifstream f(dir / "metrics.json");
    if (!f) throw IoError("missing metrics.json in " + dir.string());
    run.metrics = json::parse(f);
  }
  run.n_classes = run.metrics.at("n_classes").get<std::size_t>();

  std::ifstream csv(dir / "steps.csv");
  if (!csv) throw IoError("missing steps.csv in " + dir.string());
  std::string line;
  std::getline(csv, line);  // header
  std::vector<double> sum(run.n_classes, 0.0), sum2(run.n_classes, 0.0);
  std::vector<double> wmax(run.n_classes, 0.0);
  std::vector<std::size_t> count(run.n_classes, 0);
  while (std::getline(csv, line)) {
    std::istringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');  // step
    std::getline(ss, field, ',');
    const auto c = static_cast<std::size_t>(std::stoul(field));
    std::getline(ss, field, ',');
    const double w = std::stod(field);
    sum[c] += w;
    sum2[c] += w * w;
    wmax[c] = std::max(wmax[c], w);
    ++count[c];
  }
  run.w_mean.resize(run.n_classes);
  run.w_std.resize(run.n_classes);
  run.w_max = wmax;
  for (std::size_t c = 0; c < run.n_classes; ++c) {
    const auto n = static_cast<double>(count[c]);
    run.w_mean[c] = n > 0 ? sum[c] / n : 0.0;
    const double var = n > 0 ? sum2[c] / n - run.w_mean[c] * run.w_mean[c] : 0.0;
    run.w_std[c] = std::sqrt(std::max(var, 0.0));
  }
  return run;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report: no run directories given");
  std::vector<RunData> runs;
  for (const std::string& d : run_dirs) runs.push_back(load_run(d));
  for (const RunData& r : runs) {
    if (r.n_classes != runs.front().n_classes)
      throw ConfigError("report: incompatible class counts across runs");
  }
  const std::size_t n_classes = runs.front().n_classes;

  const fs::path out(out_dir);
  fs::create_directories(out);

  // (a) per-class IoU / recall comparison across runs
  {
    std::ofstream f(out / "comparison.csv");
    if (!f) throw IoError("cannot write comparison.csv");
    f.precision(17);
    f << "run,strategy,miou";
    for (std::size_t c = 0; c < n_classes; ++c) f << ",iou_" << c;
    for (std::size_t c = 0; c < n_classes; ++c) f << ",recall_" << c;
    f << "\n";
    for (const RunData& r : runs) {
      f << r.dir.string() << ","
        << r.manifest.at("resolved").at("plan").value("strategy", "?") << ","
        << r.metrics.at("miou").get<double>();
      for (const char* key : {"iou", "recall"}) {
        for (std::size_t c = 0; c < n_classes; ++c) {
          const json& v = r.metrics.at("per_class").at(c).at(key);
          f << ",";
          if (!v.is_null()) f << v.get<double>();
        }
      }
      f << "\n";
    }
  }

  // (b) weight-trajectory summary with class prevalence
  {
    std::ofstream f(out / "weight_summary.csv");
    if (!f) throw IoError("cannot write weight_summary.csv");
    f.precision(17);
    f << "run,class,prevalence,weight_mean,weight_std,weight_max\n";
    for (const RunData& r : runs) {
      std::vector<double> prevalence(n_classes, 0.0);
      if (r.metrics.contains("source_pixel_freq"))
        prevalence = r.metrics.at("source_pixel_freq").get<std::vector<double>>();
      for (std::size_t c = 0; c < n_classes; ++c) {
        f << r.dir.string() << "," << c << "," << prevalence[c] << "," << r.w_mean[c]
          << "," << r.w_std[c] << "," << r.w_max[c] << "\n";
      }
    }
  }

  // (c) lambda table when the runs form a grid of gbw runs
  std::map<double, std::vector<double>> by_lambda;
  for (const RunData& r : runs) {
    const json& plan = r.manifest.at("resolved").at("plan");
    if (plan.value("strategy", "") == "gbw")
      by_lambda[plan.value("lambda", 1.0)].push_back(r.metrics.at("miou").get<double>());
  }
  if (by_lambda.size() >= 2) {
    std::ofstream f(out / "lambda_table.csv");
    f.precision(17);
    f << "lambda";
    for (const auto& [l, v] : by_lambda) f << "," << l;
    f << "\nmiou";
    for (const auto& [l, v] : by_lambda) {
      double mean = 0.0;
      for (double m : v) mean += m;
      f << "," << mean / static_cast<double>(v.size());
    }
    f << "\n";
  }

  log_info("report written to " + out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient-based class weighting experiment harness"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::vector<std::string> report_dirs;
  std::string report_out = "report";

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", opts.config_path, "config JSON path")->required();
    sub->add_option("--out", opts.out_dir, "output directory")->required();
    sub->add_option("--seed", opts.seed_override, "override the config seed");
    sub->add_option("--parallel", opts.parallel, "worker count for independent cells");
  };

  CLI::App* gen = app.add_subcommand("generate", "write source/target datasets");
  add_common(gen, true);
  CLI::App* train = app.add_subcommand("train", "run one training cell");
  add_common(train, true);
  CLI::App* ablate = app.add_subcommand("ablate", "lambda-grid ablation");
  add_common(ablate, true);
  CLI::App* report = app.add_subcommand("report", "comparison tables from stored runs");
  report->add_option("runs", report_dirs, "completed run directories");
  report->add_option("--out", report_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(opts);
    if (train->parsed()) return cmd_train(opts);
    if (ablate->parsed()) return cmd_ablate(opts);
    if (report->parsed()) return cmd_report(report_dirs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const gbw::DivergedRun& e) {
    std::cerr << "diverged at step " << e.step << ": " << e.what() << "\n";
    return 3;
  } catch (const gbw::InvalidInput& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
