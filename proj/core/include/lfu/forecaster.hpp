#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lfu/data.hpp"
#include "lfu/dispatch.hpp"
#include "lfu/grid.hpp"

namespace lfu {

enum class ModelKind { Linear, Head };

/// MSE is the training loss; all three kinds serve as test criteria.
enum class LossKind { MSE, MAPE, TaskCost };

const char* to_string(ModelKind kind);
const char* to_string(LossKind kind);
ModelKind parse_model_kind(const std::string& text);

/// Frozen random-features map z = tanh(W x_flat + b).
class FeatureExtractor {
 public:
  FeatureExtractor(Eigen::MatrixXd W, Eigen::VectorXd b, std::uint64_t seed = 0);

  /// W ~ N(0, 1) / sqrt(input_dim), b ~ N(0, 0.1^2), seeded.
  static FeatureExtractor random(int input_dim, int width = 64, std::uint64_t seed = 0);

  int input_dim() const { return static_cast<int>(W_.cols()); }
  int width() const { return static_cast<int>(W_.rows()); }
  std::uint64_t seed() const { return seed_; }
  const Eigen::MatrixXd& W() const { return W_; }
  const Eigen::VectorXd& b() const { return b_; }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x_flat) const;
  /// Row-wise transform of an N x input_dim matrix.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;

 private:
  Eigen::MatrixXd W_;
  Eigen::VectorXd b_;
  std::uint64_t seed_;
};

/// Trained forecaster. Parameters are kept as one flat vector:
///   Linear: theta (M), shared by all loads, y_hat = x * theta.
///   Head:   vec(Theta) column-major, Theta is d x n, y_hat = Theta' z(x).
/// Predictions are in normalized units; `stats` maps them to MW.
struct ForecastModel {
  ModelKind kind = ModelKind::Linear;
  int loads = 0;
  int features_per_load = 0;
  Eigen::VectorXd params;
  std::optional<FeatureExtractor> extractor;
  std::optional<NormStats> stats;

  int param_dim() const { return static_cast<int>(params.size()); }
  /// Theta as a d x n matrix (head models only).
  Eigen::MatrixXd head_matrix() const;
  ForecastModel with_params(Eigen::VectorXd p) const;

  /// Prediction for one normalized feature row (load-major, length n*M).
  Eigen::VectorXd predict_row(const Eigen::VectorXd& x_flat) const;
  /// Prediction for one normalized n x M feature matrix.
  Eigen::VectorXd predict(const Eigen::MatrixXd& sample) const;
};

/// Untrained model of the given kind with zero parameters.
ForecastModel make_model(ModelKind kind, int loads, int features_per_load,
                         std::optional<NormStats> stats = std::nullopt, int width = 64,
                         std::uint64_t seed = 0);

/// Symmetric PSD matrix of the form I_repeats (x) block.
struct StructuredHessian {
  Eigen::MatrixXd block;
  int repeats = 1;

  int dim() const { return static_cast<int>(block.rows()) * repeats; }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd to_dense() const;
};

/// A model class bound to a normalized dataset. Per-sample predictions are
/// y_hat_i = D_i params, with D_i = x_i (linear) or I_n (x) z_i' (head).
class Design {
 public:
  Design(const ForecastModel& model, const Dataset& data);

  ModelKind kind() const { return kind_; }
  int samples() const { return data_->samples(); }
  int loads() const { return data_->loads(); }
  int param_dim() const { return param_dim_; }
  const Dataset& data() const { return *data_; }
  /// Extracted features (head) or the stacked per-load rows (linear).
  const Eigen::MatrixXd& basis() const { return basis_; }

  Eigen::VectorXd predict(const Eigen::VectorXd& params, int i) const;
  /// Predictions of every row as an N x n matrix.
  Eigen::MatrixXd predict_all(const Eigen::VectorXd& params) const;
  /// D_i' r.
  Eigen::VectorXd apply_transpose(int i, const Eigen::VectorXd& r) const;
  /// Gradient of the training loss ||y_hat_i - y_i||^2.
  Eigen::VectorXd train_gradient(const Eigen::VectorXd& params, int i) const;
  /// sum_k w_k * grad_k over idx (w empty means all ones), fixed order.
  Eigen::VectorXd train_gradient_sum(const Eigen::VectorXd& params, std::span<const int> idx,
                                     std::span<const double> w = {}) const;

  /// sum_k w_k * Hessian of the training loss of sample idx[k].
  StructuredHessian hessian(std::span<const int> idx, std::span<const double> w = {}) const;
  /// hessian(idx, w) * v without forming the Hessian.
  Eigen::VectorXd hvp(std::span<const int> idx, std::span<const double> w,
                      const Eigen::VectorXd& v) const;

  /// Right-hand side sum_k w_k D_k' y_k of the weighted normal equations.
  Eigen::VectorXd moment(std::span<const int> idx, std::span<const double> w = {}) const;

 private:
  ModelKind kind_;
  const Dataset* data_;
  int param_dim_;
  int features_per_load_;
  Eigen::MatrixXd basis_;
};

/// Weighted least squares on the linear model. Rank deficiency adds a
/// 1e-10 trace/dim ridge and warns.
ForecastModel fit_linear(const Dataset& data, std::span<const int> idx,
                         std::span<const double> w = {}, std::optional<NormStats> stats = std::nullopt);

/// Weighted least squares of the head on a frozen extractor. Throws
/// RankError when the extracted features are not linearly independent.
ForecastModel fit_head(const FeatureExtractor& extractor, const Dataset& data,
                       std::span<const int> idx, std::span<const double> w = {},
                       std::optional<NormStats> stats = std::nullopt);

/// Per-output least squares Theta (d x n) for given features Z and targets Y.
Eigen::MatrixXd fit_head_on_features(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Y,
                                     std::span<const double> w = {});

/// Refits parameters of `model`'s class on the design rows.
Eigen::VectorXd refit(const Design& design, std::span<const int> idx, std::span<const double> w = {});

/// Evaluates test criteria of a parameter vector on design rows.
///   MSE:      (1/n) ||y_hat - y||^2 in normalized units.
///   MAPE:     (1/n) sum |y_hat - y| / |y| on loads in MW (a fraction).
///   TaskCost: operation cost of the forecast in $.
class CriterionEvaluator {
 public:
  CriterionEvaluator(const Design& design, const GridCase* grid = nullptr);

  /// Per-sample criterion values, in the order of idx.
  Eigen::VectorXd values(const Eigen::VectorXd& params, std::span<const int> idx, LossKind kind) const;
  double mean(const Eigen::VectorXd& params, std::span<const int> idx, LossKind kind) const;

  struct GradientSum {
    Eigen::VectorXd sum;  // over parameters
    int used = 0;
    int skipped = 0;      // TaskCost samples at degenerate QP points
  };
  /// Sum of per-sample criterion gradients over idx.
  GradientSum gradient_sum(const Eigen::VectorXd& params, std::span<const int> idx, LossKind kind) const;

  /// Per-sample gradient w.r.t. the normalized forecast.
  Eigen::VectorXd output_gradient(const Eigen::VectorXd& params, int i, LossKind kind,
                                  TaskWarmStart* warm = nullptr) const;

  Eigen::VectorXd forecast_mw(const Eigen::VectorXd& params, int i) const;
  Eigen::VectorXd actual_mw(int i) const;

  const Design& design() const { return design_; }

 private:
  double value(const Eigen::VectorXd& params, int i, LossKind kind, TaskWarmStart* warm) const;
  void require_grid(LossKind kind) const;

  const Design& design_;
  const GridCase* grid_;
  Eigen::VectorXd target_mean_;
  Eigen::VectorXd target_std_;
};

/// Samples per warm-start chain in parallel criterion loops. Fixed so that
/// results do not depend on the worker count.
inline constexpr int kChainLength = 32;

double evaluate(const ForecastModel& model, const Dataset& data, std::span<const int> idx,
                LossKind kind, const GridCase* grid = nullptr);

/// Gradient of one criterion sample w.r.t. the model parameters.
Eigen::VectorXd loss_gradient(const ForecastModel& model, const Dataset& data, int i, LossKind kind,
                              const GridCase* grid = nullptr);

StructuredHessian loss_hessian(const ForecastModel& model, const Dataset& data,
                               std::span<const int> idx, std::span<const double> w = {});

// ---------------------------------------------------------------------------
// Persistence

std::string model_to_json(const ForecastModel& model);
ForecastModel model_from_json(const std::string& text);
void save_model(const ForecastModel& model, const std::filesystem::path& path);
ForecastModel load_model(const std::filesystem::path& path);

}  // namespace lfu
