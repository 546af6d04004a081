#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lfu/data.hpp"
#include "lfu/forecaster.hpp"
#include "lfu/grid.hpp"
#include "lfu/unlearn.hpp"

namespace lfu {

enum class UnlearnMode { Complete, PamuMse, PamuMape, Tamu };

UnlearnMode parse_mode(const std::string& text);
const char* to_string(UnlearnMode mode);
/// Test criterion protected by a reweighting mode (MSE for complete).
LossKind mode_criterion(UnlearnMode mode);

UnlearnPolicy parse_policy(const std::string& text);
const char* to_string(UnlearnPolicy policy);

/// Scope on which each model class is trained and unlearned.
UnlearnScope scope_for(ModelKind kind);

/// A normalized dataset, its split plan and a trained model.
struct Experiment {
  Dataset data;
  SplitConfig split;
  SplitPlan plan;
  ForecastModel model;
  std::optional<GridCase> grid;

  const GridCase* grid_ptr() const { return grid ? &*grid : nullptr; }
};

struct TrainConfig {
  ModelKind kind = ModelKind::Linear;
  SplitConfig split;
  int head_width = 64;
  std::uint64_t extractor_seed = 0;
};

/// Splits the raw dataset, normalizes on the training rows and fits the
/// model on its scope (train for linear, sensitive for head).
Experiment train_experiment(const Dataset& raw, const TrainConfig& config,
                            std::optional<GridCase> grid = std::nullopt);

/// Rebuilds an experiment around a saved model, normalizing the raw data
/// with the model's statistics.
Experiment attach_experiment(const Dataset& raw, ForecastModel model, const SplitConfig& split,
                             std::optional<GridCase> grid = std::nullopt);

struct UnlearnRequest {
  UnlearnMode mode = UnlearnMode::Complete;
  double ratio = 0.0;
  double lambda1 = 0.0;
  double lambda_inf = 1.0;
  UnlearnPolicy policy = UnlearnPolicy::SeededRandom;
  std::uint64_t seed = 0;
  bool unweighted_hessian = false;
  bool clamp_nonnegative = false;
};

struct PartMetric {
  std::string part;  // remain, unlearn, test
  LossKind criterion = LossKind::MSE;
  double before = 0.0;
  double after = 0.0;
  double retrain = 0.0;
};

struct MetricOptions {
  bool mse = true;
  bool mape = true;
  /// Operation cost is evaluated only when a grid is attached.
  bool cost = true;
  std::vector<std::string> parts = {"remain", "unlearn", "test"};
};

struct UnlearnReport {
  UnlearnRequest request;
  std::vector<int> unlearn_idx;
  std::vector<int> remain_idx;
  Eigen::VectorXd theta_before;
  Eigen::VectorXd theta_after;
  Eigen::VectorXd theta_retrain;
  Eigen::VectorXd epsilon;
  /// ||theta_after - theta_retrain||_2.
  double distance_to_retrain = 0.0;
  /// ||theta_after - theta_retrain||_inf / ||theta_retrain||_inf.
  double relative_distance = 0.0;
  /// sum eps_i a_i of the reweighting program (0 for complete).
  double predicted_objective = 0.0;
  int cg_iterations = 0;
  int skipped_samples = 0;
  std::vector<PartMetric> metrics;

  const PartMetric* find(const std::string& part, LossKind criterion) const;
};

/// Influence quantities shared by every lambda1 of one unlearn request.
struct ReweightBasis {
  std::vector<int> unlearn_idx;
  std::vector<int> remain_idx;
  Eigen::VectorXd scores;  // empty for complete mode
  int cg_iterations = 0;
  int skipped_samples = 0;
};

ReweightBasis prepare_unlearn(const Experiment& exp, const UnlearnRequest& request);

/// Unlearns, refits the retrain oracle and evaluates metrics.
UnlearnReport run_unlearn(const Experiment& exp, const UnlearnRequest& request,
                          const MetricOptions& metrics = {});
UnlearnReport run_unlearn(const Experiment& exp, const UnlearnRequest& request,
                          const ReweightBasis& basis, const MetricOptions& metrics = {});

enum class SweepKind { Ratio, Lambda1 };
SweepKind parse_sweep(const std::string& text);

struct SweepRow {
  double sweep_value = 0.0;
  std::string part;
  std::string criterion;
  double before = 0.0;
  double after = 0.0;
  double retrain = 0.0;
  double distance = 0.0;
};

std::vector<SweepRow> run_sweep(const Experiment& exp, const UnlearnRequest& base, SweepKind kind,
                                const std::vector<double>& values, const MetricOptions& metrics = {});

struct InfluenceAnalysis {
  std::vector<int> samples;
  Eigen::VectorXd mse;
  Eigen::VectorXd mape;
  Eigen::VectorXd cost;
  std::vector<GenerationClass> classes;
  /// Positions into `samples` of the class-balanced subsample.
  std::vector<int> subsample;
  /// Pearson matrix over the subsample, order mse, mape, cost.
  Eigen::Matrix3d pearson = Eigen::Matrix3d::Identity();
  int skipped_samples = 0;
};

/// Scores of all remaining samples under the three criteria, then a seeded
/// subsample of up to `per_class` samples of each generation class.
InfluenceAnalysis run_influence(const Experiment& exp, const UnlearnRequest& request,
                                int per_class = 500);

// ---------------------------------------------------------------------------
// Serialization

std::string report_to_json(const UnlearnReport& report);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);
/// Columns idx, a_i, I_mse, I_mape, I_cost, class; a_i is the score of
/// `selected`.
std::string scores_to_csv(const InfluenceAnalysis& analysis, LossKind selected);
std::string pearson_to_json(const InfluenceAnalysis& analysis);

}  // namespace lfu
