#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lfu/data.hpp"
#include "lfu/engine.hpp"
#include "lfu/error.hpp"
#include "lfu/forecaster.hpp"
#include "lfu/grid.hpp"
#include "lfu/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string dataset;
  std::string grid_case;
  std::string model;
  std::string out = ".";
  std::string model_kind = "linear";
  std::string mode = "complete";
  std::string policy = "random";
  double ratio = 0.0;
  double lambda1 = 0.0;
  double lambda_inf = 1.0;
  std::uint64_t seed = 0;
  double train_frac = 0.8;
  double pretrain_frac = 0.3;
  int head_width = 64;
  std::uint64_t extractor_seed = 0;
  bool unweighted_hessian = false;
  bool clamp = false;
  int threads = 0;

  lfu::SyntheticConfig synthetic;

  std::string sweep = "ratio";
  std::vector<double> values;
  int per_class = 500;
  std::string criterion = "cost";
};

fs::path features_file(const std::string& dir) { return fs::path(dir) / "features.csv"; }
fs::path targets_file(const std::string& dir) { return fs::path(dir) / "targets.csv"; }

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw lfu::ConfigError(std::string(flag) + " is required");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lfu::IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw lfu::IoError("failed writing " + path.string());
}

fs::path output_dir(const Options& o) {
  const fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw lfu::IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

lfu::Dataset read_dataset(const Options& o) {
  require(o.dataset, "--dataset");
  return lfu::load_csv(features_file(o.dataset), targets_file(o.dataset));
}

std::optional<lfu::GridCase> read_case(const Options& o) {
  if (o.grid_case.empty()) return std::nullopt;
  return lfu::load_case(o.grid_case);
}

lfu::SplitConfig split_config(const Options& o) {
  lfu::SplitConfig s;
  s.train_frac = o.train_frac;
  s.pretrain_frac = o.pretrain_frac;
  return s;
}

lfu::Experiment load_experiment(const Options& o) {
  require(o.model, "--model");
  return lfu::attach_experiment(read_dataset(o), lfu::load_model(o.model), split_config(o), read_case(o));
}

lfu::UnlearnRequest unlearn_request(const Options& o) {
  lfu::UnlearnRequest r;
  r.mode = lfu::parse_mode(o.mode);
  r.ratio = o.ratio;
  r.lambda1 = o.lambda1;
  r.lambda_inf = o.lambda_inf;
  r.policy = lfu::parse_policy(o.policy);
  r.seed = o.seed;
  r.unweighted_hessian = o.unweighted_hessian;
  r.clamp_nonnegative = o.clamp;
  return r;
}

lfu::LossKind parse_criterion(const std::string& text) {
  if (text == "mse") return lfu::LossKind::MSE;
  if (text == "mape") return lfu::LossKind::MAPE;
  if (text == "cost") return lfu::LossKind::TaskCost;
  throw lfu::ConfigError("unknown criterion '" + text + "' (expected mse, mape or cost)");
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const Options& o) {
  const lfu::Dataset data = lfu::generate_synthetic(o.synthetic);
  const fs::path dir = output_dir(o);
  lfu::write_csv(data, dir / "features.csv", dir / "targets.csv");
  std::cout << "wrote " << data.samples() << " samples to " << dir.string() << "\n";
}

json part_metrics(const lfu::ForecastModel& model, const lfu::Dataset& data,
                  const std::vector<int>& idx, const lfu::GridCase* grid) {
  json m;
  m["samples"] = idx.size();
  m["mse"] = lfu::evaluate(model, data, idx, lfu::LossKind::MSE);
  m["mape"] = lfu::evaluate(model, data, idx, lfu::LossKind::MAPE);
  if (grid) m["cost"] = lfu::evaluate(model, data, idx, lfu::LossKind::TaskCost, grid);
  return m;
}

void cmd_train(const Options& o) {
  lfu::TrainConfig cfg;
  cfg.kind = lfu::parse_model_kind(o.model_kind);
  cfg.split = split_config(o);
  cfg.head_width = o.head_width;
  cfg.extractor_seed = o.extractor_seed;
  const lfu::Experiment exp = lfu::train_experiment(read_dataset(o), cfg, read_case(o));

  const fs::path dir = output_dir(o);
  lfu::save_model(exp.model, dir / "model.json");
  json metrics;
  metrics["model_kind"] = lfu::to_string(exp.model.kind);
  metrics["parameters"] = exp.model.param_dim();
  metrics["fit"] = part_metrics(exp.model, exp.data, exp.plan.scope_idx(), exp.grid_ptr());
  metrics["test"] = part_metrics(exp.model, exp.data, exp.plan.test_idx, exp.grid_ptr());
  write_text(dir / "metrics.json", metrics.dump(1) + "\n");
  std::cout << "test mse " << metrics["test"]["mse"].get<double>() << ", model written to "
            << (dir / "model.json").string() << "\n";
}

void cmd_unlearn(const Options& o) {
  const lfu::Experiment exp = load_experiment(o);
  const lfu::UnlearnReport report = lfu::run_unlearn(exp, unlearn_request(o));
  const fs::path dir = output_dir(o);
  write_text(dir / "report.json", lfu::report_to_json(report) + "\n");
  lfu::save_model(exp.model.with_params(report.theta_after), dir / "model_unlearned.json");
  std::cout << "unlearned " << report.unlearn_idx.size() << " samples, distance to retrain "
            << report.distance_to_retrain << "\n";
}

void cmd_sweep(const Options& o) {
  if (o.values.empty()) throw lfu::ConfigError("--values needs at least one entry");
  const lfu::Experiment exp = load_experiment(o);
  const auto rows = lfu::run_sweep(exp, unlearn_request(o), lfu::parse_sweep(o.sweep), o.values);
  const fs::path dir = output_dir(o);
  write_text(dir / "sweep.csv", lfu::sweep_to_csv(rows));
  std::cout << rows.size() << " rows written to " << (dir / "sweep.csv").string() << "\n";
}

void cmd_influence(const Options& o) {
  const lfu::Experiment exp = load_experiment(o);
  const lfu::InfluenceAnalysis a = lfu::run_influence(exp, unlearn_request(o), o.per_class);
  const fs::path dir = output_dir(o);
  write_text(dir / "scores.csv", lfu::scores_to_csv(a, parse_criterion(o.criterion)));
  write_text(dir / "pearson.json", lfu::pearson_to_json(a) + "\n");
  std::cout << "r(mse, mape) " << a.pearson(0, 1) << ", r(mse, cost) " << a.pearson(0, 2) << "\n";
}

// ---------------------------------------------------------------------------

void add_data_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--dataset", o.dataset, "Directory holding features.csv and targets.csv")->required();
  cmd->add_option("--train-frac", o.train_frac, "Leading fraction of rows used for training");
  cmd->add_option("--pretrain-frac", o.pretrain_frac, "Leading fraction of training rows held out from the head fit");
}

void add_unlearn_flags(CLI::App* cmd, Options& o) {
  add_data_flags(cmd, o);
  cmd->add_option("--model", o.model, "Trained model file")->required();
  cmd->add_option("--case", o.grid_case, "Grid case JSON (needed for cost metrics and tamu)");
  cmd->add_option("--mode", o.mode, "complete, pamu-mse, pamu-mape or tamu");
  cmd->add_option("--ratio", o.ratio, "Fraction of the training scope to unlearn");
  cmd->add_option("--lambda1", o.lambda1, "Average reweighting budget");
  cmd->add_option("--lambda-inf", o.lambda_inf, "Per-sample reweighting bound");
  cmd->add_option("--policy", o.policy, "Unlearn set draw: random or first-k");
  cmd->add_option("--seed", o.seed, "Seed of the unlearn set draw");
  cmd->add_flag("--unweighted-hessian", o.unweighted_hessian, "Use the unweighted Hessian in the update");
  cmd->add_flag("--clamp", o.clamp, "Clamp weights at zero");
  cmd->add_option("--out", o.out, "Output directory");
}

int run(int argc, char** argv) {
  CLI::App app{"Load forecaster unlearning toolkit"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--threads", o.threads, "Worker threads (0: hardware concurrency)");

  CLI::App* gen = app.add_subcommand("gen-data", "Write a seeded synthetic dataset");
  gen->add_option("--out", o.out, "Output directory");
  gen->add_option("--seed", o.synthetic.seed, "Generator seed");
  gen->add_option("--samples", o.synthetic.samples, "Number of hourly samples");
  gen->add_option("--loads", o.synthetic.loads, "Number of loads");
  gen->add_option("--features", o.synthetic.features_per_load, "Features per load");
  gen->add_option("--noise", o.synthetic.noise_std, "Relative noise level");

  CLI::App* train = app.add_subcommand("train", "Fit a forecaster");
  add_data_flags(train, o);
  train->add_option("--model-kind", o.model_kind, "linear or head");
  train->add_option("--case", o.grid_case, "Grid case JSON for cost metrics");
  train->add_option("--head-width", o.head_width, "Extractor width of the head model");
  train->add_option("--extractor-seed", o.extractor_seed, "Extractor seed of the head model");
  train->add_option("--out", o.out, "Output directory");

  CLI::App* unlearn = app.add_subcommand("unlearn", "Unlearn part of the training data");
  add_unlearn_flags(unlearn, o);

  CLI::App* sweep = app.add_subcommand("sweep", "Sweep the unlearn ratio or lambda1");
  add_unlearn_flags(sweep, o);
  sweep->add_option("--sweep", o.sweep, "ratio or lambda1");
  sweep->add_option("--values", o.values, "Sweep points")->delimiter(',')->required();

  CLI::App* influence = app.add_subcommand("influence", "Per-sample influence scores and correlations");
  add_unlearn_flags(influence, o);
  influence->add_option("--per-class", o.per_class, "Samples per generation class in the correlation subsample");
  influence->add_option("--criterion", o.criterion, "Criterion reported in the a_i column: mse, mape or cost");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  lfu::set_default_threads(o.threads);

  if (*gen) cmd_gen_data(o);
  if (*train) cmd_train(o);
  if (*unlearn) cmd_unlearn(o);
  if (*sweep) cmd_sweep(o);
  if (*influence) cmd_influence(o);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const lfu::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const lfu::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const lfu::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
