#include "lfu/forecaster.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lfu/error.hpp"
#include "lfu/parallel.hpp"

namespace lfu {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

const char* to_string(ModelKind kind) { return kind == ModelKind::Linear ? "linear" : "head"; }

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::MSE: return "mse";
    case LossKind::MAPE: return "mape";
    case LossKind::TaskCost: return "cost";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "linear") return ModelKind::Linear;
  if (text == "head") return ModelKind::Head;
  throw ConfigError("unknown model kind '" + text + "' (expected linear or head)");
}

// ---------------------------------------------------------------------------
// Extractor

FeatureExtractor::FeatureExtractor(MatrixXd W, VectorXd b, std::uint64_t seed)
    : W_(std::move(W)), b_(std::move(b)), seed_(seed) {
  if (W_.rows() < 1 || W_.cols() < 1 || b_.size() != W_.rows()) {
    throw ConfigError("feature extractor: W and b have inconsistent shapes");
  }
}

FeatureExtractor FeatureExtractor::random(int input_dim, int width, std::uint64_t seed) {
  if (input_dim < 1 || width < 1) throw ConfigError("feature extractor: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  MatrixXd W(width, input_dim);
  for (int r = 0; r < width; ++r) {
    for (int c = 0; c < input_dim; ++c) W(r, c) = normal(rng) * scale;
  }
  VectorXd b(width);
  for (int r = 0; r < width; ++r) b(r) = 0.1 * normal(rng);
  return FeatureExtractor(std::move(W), std::move(b), seed);
}

VectorXd FeatureExtractor::operator()(const VectorXd& x_flat) const {
  if (x_flat.size() != W_.cols()) throw ConfigError("feature extractor: input has wrong length");
  return (W_ * x_flat + b_).array().tanh();
}

MatrixXd FeatureExtractor::transform(const MatrixXd& X) const {
  if (X.cols() != W_.cols()) throw ConfigError("feature extractor: input has wrong width");
  MatrixXd Z = X * W_.transpose();
  Z.rowwise() += b_.transpose();
  return Z.array().tanh();
}

// ---------------------------------------------------------------------------
// Model

MatrixXd ForecastModel::head_matrix() const {
  if (kind != ModelKind::Head || !extractor) throw ConfigError("head_matrix on a non-head model");
  return Eigen::Map<const MatrixXd>(params.data(), extractor->width(), loads);
}

ForecastModel ForecastModel::with_params(VectorXd p) const {
  if (p.size() != params.size()) throw ConfigError("parameter vector has wrong length");
  ForecastModel m = *this;
  m.params = std::move(p);
  return m;
}

VectorXd ForecastModel::predict_row(const VectorXd& x_flat) const {
  if (x_flat.size() != static_cast<Eigen::Index>(loads) * features_per_load) {
    throw ConfigError("predict: feature row has wrong length");
  }
  if (kind == ModelKind::Linear) {
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
        x_flat.data(), loads, features_per_load);
    return x * params;
  }
  return head_matrix().transpose() * (*extractor)(x_flat);
}

VectorXd ForecastModel::predict(const MatrixXd& sample) const {
  if (sample.rows() != loads || sample.cols() != features_per_load) {
    throw ConfigError("predict: sample must be loads x features_per_load");
  }
  if (kind == ModelKind::Linear) return sample * params;
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = sample;
  const VectorXd flat = Eigen::Map<const VectorXd>(row_major.data(), row_major.size());
  return predict_row(flat);
}

ForecastModel make_model(ModelKind kind, int loads, int features_per_load,
                         std::optional<NormStats> stats, int width, std::uint64_t seed) {
  if (loads < 1 || features_per_load < 1) throw ConfigError("model dimensions must be positive");
  ForecastModel m;
  m.kind = kind;
  m.loads = loads;
  m.features_per_load = features_per_load;
  m.stats = std::move(stats);
  if (kind == ModelKind::Linear) {
    m.params = VectorXd::Zero(features_per_load);
  } else {
    m.extractor = FeatureExtractor::random(loads * features_per_load, width, seed);
    m.params = VectorXd::Zero(static_cast<Eigen::Index>(width) * loads);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Structured Hessian

VectorXd StructuredHessian::apply(const VectorXd& v) const {
  if (v.size() != dim()) throw ConfigError("Hessian product: vector has wrong length");
  const Eigen::Map<const MatrixXd> V(v.data(), block.rows(), repeats);
  const MatrixXd out = block * V;
  return Eigen::Map<const VectorXd>(out.data(), out.size());
}

MatrixXd StructuredHessian::to_dense() const {
  const Eigen::Index b = block.rows();
  MatrixXd H = MatrixXd::Zero(dim(), dim());
  for (int r = 0; r < repeats; ++r) H.block(r * b, r * b, b, b) = block;
  return H;
}

// ---------------------------------------------------------------------------
// Design

namespace {

void check_weights(std::span<const int> idx, std::span<const double> w) {
  if (!w.empty() && w.size() != idx.size()) throw ConfigError("weights and indices differ in length");
}

double weight_at(std::span<const double> w, std::size_t k) { return w.empty() ? 1.0 : w[k]; }

}  // namespace

Design::Design(const ForecastModel& model, const Dataset& data)
    : kind_(model.kind),
      data_(&data),
      param_dim_(model.param_dim()),
      features_per_load_(data.features_per_load()) {
  if (model.loads != data.loads() || model.features_per_load != data.features_per_load()) {
    throw ConfigError("model and dataset dimensions differ");
  }
  const int n = data.loads();
  const int M = data.features_per_load();
  if (kind_ == ModelKind::Linear) {
    basis_.resize(static_cast<Eigen::Index>(data.samples()) * n, M);
    for (int i = 0; i < data.samples(); ++i) {
      for (int l = 0; l < n; ++l) {
        basis_.row(static_cast<Eigen::Index>(i) * n + l) = data.features().row(i).segment(l * M, M);
      }
    }
  } else {
    basis_ = model.extractor->transform(data.features());
  }
}

VectorXd Design::predict(const VectorXd& params, int i) const {
  const int n = loads();
  if (kind_ == ModelKind::Linear) return basis_.middleRows(static_cast<Eigen::Index>(i) * n, n) * params;
  const Eigen::Map<const MatrixXd> Theta(params.data(), basis_.cols(), n);
  return Theta.transpose() * basis_.row(i).transpose();
}

MatrixXd Design::predict_all(const VectorXd& params) const {
  const int n = loads();
  if (kind_ == ModelKind::Linear) {
    const VectorXd flat = basis_ * params;
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data(), samples(), n);
  }
  const Eigen::Map<const MatrixXd> Theta(params.data(), basis_.cols(), n);
  return basis_ * Theta;
}

VectorXd Design::apply_transpose(int i, const VectorXd& r) const {
  const int n = loads();
  if (kind_ == ModelKind::Linear) {
    return basis_.middleRows(static_cast<Eigen::Index>(i) * n, n).transpose() * r;
  }
  const MatrixXd outer = basis_.row(i).transpose() * r.transpose();
  return Eigen::Map<const VectorXd>(outer.data(), outer.size());
}

VectorXd Design::train_gradient(const VectorXd& params, int i) const {
  const VectorXd residual = predict(params, i) - data_->targets().row(i).transpose();
  return 2.0 * apply_transpose(i, residual);
}

VectorXd Design::train_gradient_sum(const VectorXd& params, std::span<const int> idx,
                                    std::span<const double> w) const {
  check_weights(idx, w);
  VectorXd g = VectorXd::Zero(param_dim_);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double wk = weight_at(w, k);
    if (wk != 0.0) g += wk * train_gradient(params, idx[k]);
  }
  return g;
}

namespace {

/// Rows of `basis` belonging to the listed samples, each scaled by its weight.
struct Gathered {
  MatrixXd rows;
  MatrixXd weighted;
};

Gathered gather(const MatrixXd& basis, int per_sample, std::span<const int> idx,
                std::span<const double> w) {
  Gathered g;
  g.rows.resize(static_cast<Eigen::Index>(idx.size()) * per_sample, basis.cols());
  g.weighted.resize(g.rows.rows(), g.rows.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double wk = weight_at(w, k);
    const auto src = basis.middleRows(static_cast<Eigen::Index>(idx[k]) * per_sample, per_sample);
    g.rows.middleRows(static_cast<Eigen::Index>(k) * per_sample, per_sample) = src;
    g.weighted.middleRows(static_cast<Eigen::Index>(k) * per_sample, per_sample) = wk * src;
  }
  return g;
}

}  // namespace

StructuredHessian Design::hessian(std::span<const int> idx, std::span<const double> w) const {
  check_weights(idx, w);
  const int per_sample = kind_ == ModelKind::Linear ? loads() : 1;
  const Gathered g = gather(basis_, per_sample, idx, w);
  StructuredHessian H;
  H.block = 2.0 * g.rows.transpose() * g.weighted;
  H.block = 0.5 * (H.block + H.block.transpose()).eval();
  H.repeats = kind_ == ModelKind::Linear ? 1 : loads();
  return H;
}

VectorXd Design::hvp(std::span<const int> idx, std::span<const double> w, const VectorXd& v) const {
  check_weights(idx, w);
  if (v.size() != param_dim_) throw ConfigError("hvp: vector has wrong length");
  const int per_sample = kind_ == ModelKind::Linear ? loads() : 1;
  const Gathered g = gather(basis_, per_sample, idx, w);
  const int repeats = kind_ == ModelKind::Linear ? 1 : loads();
  const Eigen::Map<const MatrixXd> V(v.data(), basis_.cols(), repeats);
  const MatrixXd out = 2.0 * g.rows.transpose() * (g.weighted * V);
  return Eigen::Map<const VectorXd>(out.data(), out.size());
}

VectorXd Design::moment(std::span<const int> idx, std::span<const double> w) const {
  check_weights(idx, w);
  const int n = loads();
  const MatrixXd& Y = data_->targets();
  if (kind_ == ModelKind::Linear) {
    VectorXd m = VectorXd::Zero(basis_.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double wk = weight_at(w, k);
      m += wk * basis_.middleRows(static_cast<Eigen::Index>(idx[k]) * n, n).transpose() *
           Y.row(idx[k]).transpose();
    }
    return m;
  }
  MatrixXd M = MatrixXd::Zero(basis_.cols(), n);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    M += weight_at(w, k) * basis_.row(idx[k]).transpose() * Y.row(idx[k]);
  }
  return Eigen::Map<const VectorXd>(M.data(), M.size());
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

struct Spectrum {
  double min = 0.0;
  double max = 0.0;
};

Spectrum spectrum(const MatrixXd& G) {
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(G, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

MatrixXd solve_gram(MatrixXd G, const MatrixXd& rhs, ModelKind kind) {
  const Spectrum s = spectrum(G);
  if (kind == ModelKind::Head) {
    if (!(s.max > 0.0) || s.min <= 1e-10 * s.max) {
      throw RankError(
          "extracted features are not linearly independent on the fitting set; the head "
          "objective has no unique minimizer");
    }
  } else if (!(s.max > 0.0) || s.min <= 1e-12 * s.max) {
    const double trace = G.trace();
    if (!(trace > 0.0)) throw RankError("linear model: design matrix is zero");
    const double ridge = 1e-10 * trace / static_cast<double>(G.rows());
    warn("linear model design is rank deficient; adding ridge " + std::to_string(ridge));
    G.diagonal().array() += ridge;
  }
  const Eigen::LLT<MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) throw RankError("normal equations are not positive definite");
  return llt.solve(rhs);
}

int nonzero_weights(std::span<const int> idx, std::span<const double> w) {
  if (w.empty()) return static_cast<int>(idx.size());
  int count = 0;
  for (double v : w) count += v != 0.0 ? 1 : 0;
  return count;
}

}  // namespace

VectorXd refit(const Design& design, std::span<const int> idx, std::span<const double> w) {
  check_weights(idx, w);
  if (idx.empty()) throw ConfigError("cannot fit on an empty index set");
  const StructuredHessian H = design.hessian(idx, w);
  const MatrixXd G = 0.5 * H.block;
  const VectorXd m = design.moment(idx, w);
  if (design.kind() == ModelKind::Head) {
    const int used = nonzero_weights(idx, w);
    if (used <= G.rows()) {
      throw RankError("head fit needs more samples than features (" + std::to_string(used) +
                      " <= " + std::to_string(G.rows()) + ")");
    }
  }
  const Eigen::Map<const MatrixXd> rhs(m.data(), G.rows(), H.repeats);
  const MatrixXd sol = solve_gram(G, rhs, design.kind());
  return Eigen::Map<const VectorXd>(sol.data(), sol.size());
}

ForecastModel fit_linear(const Dataset& data, std::span<const int> idx, std::span<const double> w,
                         std::optional<NormStats> stats) {
  ForecastModel model = make_model(ModelKind::Linear, data.loads(), data.features_per_load(),
                                   stats ? stats : data.norm_stats());
  const Design design(model, data);
  model.params = refit(design, idx, w);
  return model;
}

ForecastModel fit_head(const FeatureExtractor& extractor, const Dataset& data,
                       std::span<const int> idx, std::span<const double> w,
                       std::optional<NormStats> stats) {
  if (extractor.input_dim() != data.loads() * data.features_per_load()) {
    throw ConfigError("extractor input size does not match the dataset");
  }
  ForecastModel model;
  model.kind = ModelKind::Head;
  model.loads = data.loads();
  model.features_per_load = data.features_per_load();
  model.extractor = extractor;
  model.stats = stats ? stats : data.norm_stats();
  model.params = VectorXd::Zero(static_cast<Eigen::Index>(extractor.width()) * data.loads());
  const Design design(model, data);
  model.params = refit(design, idx, w);
  return model;
}

MatrixXd fit_head_on_features(const MatrixXd& Z, const MatrixXd& Y, std::span<const double> w) {
  if (Z.rows() != Y.rows()) throw ConfigError("features and targets differ in row count");
  if (!w.empty() && static_cast<Eigen::Index>(w.size()) != Z.rows()) {
    throw ConfigError("weights have wrong length");
  }
  MatrixXd Zw = Z;
  for (Eigen::Index r = 0; r < Z.rows(); ++r) Zw.row(r) *= w.empty() ? 1.0 : w[r];
  int used = 0;
  for (Eigen::Index r = 0; r < Z.rows(); ++r) used += (w.empty() || w[r] != 0.0) ? 1 : 0;
  if (used <= Z.cols()) {
    throw RankError("head fit needs more samples than features (" + std::to_string(used) +
                    " <= " + std::to_string(Z.cols()) + ")");
  }
  const MatrixXd G = Z.transpose() * Zw;
  return solve_gram(0.5 * (G + G.transpose()), Zw.transpose() * Y, ModelKind::Head);
}

// ---------------------------------------------------------------------------
// Criteria

CriterionEvaluator::CriterionEvaluator(const Design& design, const GridCase* grid)
    : design_(design), grid_(grid) {
  const int n = design.loads();
  const auto& stats = design.data().norm_stats();
  target_mean_ = stats ? stats->target_mean : VectorXd::Zero(n);
  target_std_ = stats ? stats->target_std : VectorXd::Ones(n);
  if (grid_ && grid_->loads() != n) {
    throw ConfigError("grid case has " + std::to_string(grid_->loads()) + " loads, dataset has " +
                      std::to_string(n));
  }
}

void CriterionEvaluator::require_grid(LossKind kind) const {
  if (kind == LossKind::TaskCost && grid_ == nullptr) {
    throw ConfigError("the operation-cost criterion needs a grid case");
  }
}

VectorXd CriterionEvaluator::forecast_mw(const VectorXd& params, int i) const {
  return target_mean_ + target_std_.cwiseProduct(design_.predict(params, i));
}

VectorXd CriterionEvaluator::actual_mw(int i) const {
  return target_mean_ + target_std_.cwiseProduct(design_.data().targets().row(i).transpose());
}

double CriterionEvaluator::value(const VectorXd& params, int i, LossKind kind,
                                 TaskWarmStart* warm) const {
  const int n = design_.loads();
  switch (kind) {
    case LossKind::MSE: {
      const VectorXd r = design_.predict(params, i) - design_.data().targets().row(i).transpose();
      return r.squaredNorm() / n;
    }
    case LossKind::MAPE: {
      const VectorXd f = forecast_mw(params, i);
      const VectorXd a = actual_mw(i);
      return ((f - a).array().abs() / a.array().abs()).sum() / n;
    }
    case LossKind::TaskCost:
      return task_loss(forecast_mw(params, i), actual_mw(i), *grid_, warm);
  }
  return 0.0;
}

VectorXd CriterionEvaluator::output_gradient(const VectorXd& params, int i, LossKind kind,
                                             TaskWarmStart* warm) const {
  const int n = design_.loads();
  switch (kind) {
    case LossKind::MSE: {
      const VectorXd r = design_.predict(params, i) - design_.data().targets().row(i).transpose();
      return (2.0 / n) * r;
    }
    case LossKind::MAPE: {
      const VectorXd f = forecast_mw(params, i);
      const VectorXd a = actual_mw(i);
      VectorXd g(n);
      for (int k = 0; k < n; ++k) {
        const double e = f(k) - a(k);
        const double sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
        g(k) = sign / std::abs(a(k)) * target_std_(k) / n;
      }
      return g;
    }
    case LossKind::TaskCost: {
      require_grid(kind);
      const TaskGradient tg = task_loss_grad(forecast_mw(params, i), actual_mw(i), *grid_, warm);
      return target_std_.cwiseProduct(tg.grad);
    }
  }
  return VectorXd();
}

VectorXd CriterionEvaluator::values(const VectorXd& params, std::span<const int> idx,
                                    LossKind kind) const {
  require_grid(kind);
  const int count = static_cast<int>(idx.size());
  VectorXd out(count);
  if (kind != LossKind::TaskCost) {
    for (int k = 0; k < count; ++k) out(k) = value(params, idx[k], kind, nullptr);
    return out;
  }
  const int chains = (count + kChainLength - 1) / kChainLength;
  parallel_for(chains, [&](int c) {
    TaskWarmStart warm;
    const int end = std::min(count, (c + 1) * kChainLength);
    for (int k = c * kChainLength; k < end; ++k) out(k) = value(params, idx[k], kind, &warm);
  });
  return out;
}

double CriterionEvaluator::mean(const VectorXd& params, std::span<const int> idx, LossKind kind) const {
  if (idx.empty()) throw ConfigError("criterion mean over an empty index set");
  return values(params, idx, kind).sum() / static_cast<double>(idx.size());
}

CriterionEvaluator::GradientSum CriterionEvaluator::gradient_sum(const VectorXd& params,
                                                                 std::span<const int> idx,
                                                                 LossKind kind) const {
  require_grid(kind);
  const int count = static_cast<int>(idx.size());
  std::vector<VectorXd> per(count);
  std::vector<char> ok(count, 1);
  const int chains = (count + kChainLength - 1) / kChainLength;
  parallel_for(chains, [&](int c) {
    TaskWarmStart warm;
    const int end = std::min(count, (c + 1) * kChainLength);
    for (int k = c * kChainLength; k < end; ++k) {
      try {
        per[k] = design_.apply_transpose(idx[k], output_gradient(params, idx[k], kind, &warm));
      } catch (const DegenerateError&) {
        ok[k] = 0;
      } catch (const LicqError&) {
        ok[k] = 0;
      }
    }
  });
  GradientSum out;
  out.sum = VectorXd::Zero(design_.param_dim());
  for (int k = 0; k < count; ++k) {
    if (ok[k]) {
      out.sum += per[k];
      ++out.used;
    } else {
      ++out.skipped;
    }
  }
  return out;
}

double evaluate(const ForecastModel& model, const Dataset& data, std::span<const int> idx,
                LossKind kind, const GridCase* grid) {
  const Design design(model, data);
  return CriterionEvaluator(design, grid).mean(model.params, idx, kind);
}

VectorXd loss_gradient(const ForecastModel& model, const Dataset& data, int i, LossKind kind,
                       const GridCase* grid) {
  const Design design(model, data);
  const CriterionEvaluator eval(design, grid);
  return design.apply_transpose(i, eval.output_gradient(model.params, i, kind));
}

StructuredHessian loss_hessian(const ForecastModel& model, const Dataset& data,
                               std::span<const int> idx, std::span<const double> w) {
  return Design(model, data).hessian(idx, w);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json matrix_json(const MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

json vector_json(const VectorXd& v) {
  return json{{"shape", {v.size()}}, {"data", std::vector<double>(v.data(), v.data() + v.size())}};
}

MatrixXd matrix_from(const json& j, const char* what) {
  try {
    const auto shape = j.at("shape").get<std::vector<long>>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] * shape[1] != static_cast<long>(data.size())) {
      throw FormatError(std::string("model file: bad shape for ") + what);
    }
    MatrixXd m(shape[0], shape[1]);
    for (long r = 0; r < shape[0]; ++r) {
      for (long c = 0; c < shape[1]; ++c) m(r, c) = data[r * shape[1] + c];
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: bad ") + what + ": " + e.what());
  }
}

VectorXd vector_from(const json& j, const char* what) {
  try {
    const auto shape = j.at("shape").get<std::vector<long>>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (shape.size() != 1 || shape[0] != static_cast<long>(data.size())) {
      throw FormatError(std::string("model file: bad shape for ") + what);
    }
    return Eigen::Map<const VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: bad ") + what + ": " + e.what());
  }
}

}  // namespace

std::string model_to_json(const ForecastModel& model) {
  json doc;
  doc["format"] = "lfu-model";
  doc["version"] = 1;
  doc["kind"] = to_string(model.kind);
  doc["loads"] = model.loads;
  doc["features_per_load"] = model.features_per_load;
  if (model.kind == ModelKind::Linear) {
    doc["theta"] = vector_json(model.params);
  } else {
    doc["Theta"] = matrix_json(model.head_matrix());
    doc["extractor"] = {{"seed", model.extractor->seed()},
                        {"W", matrix_json(model.extractor->W())},
                        {"b", vector_json(model.extractor->b())}};
  }
  if (model.stats) {
    doc["norm_stats"] = {{"feature_mean", vector_json(model.stats->feature_mean)},
                         {"feature_std", vector_json(model.stats->feature_std)},
                         {"target_mean", vector_json(model.stats->target_mean)},
                         {"target_std", vector_json(model.stats->target_std)}};
  }
  return doc.dump(1);
}

ForecastModel model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("model file: invalid JSON: ") + e.what());
  }
  ForecastModel m;
  try {
    if (doc.at("format").get<std::string>() != "lfu-model") throw FormatError("model file: wrong format tag");
    m.kind = parse_model_kind(doc.at("kind").get<std::string>());
    m.loads = doc.at("loads").get<int>();
    m.features_per_load = doc.at("features_per_load").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  if (m.kind == ModelKind::Linear) {
    m.params = vector_from(doc.at("theta"), "theta");
    if (m.params.size() != m.features_per_load) throw FormatError("model file: theta has wrong length");
  } else {
    if (!doc.contains("extractor")) throw FormatError("model file: head model without extractor");
    const json& ex = doc.at("extractor");
    m.extractor = FeatureExtractor(matrix_from(ex.at("W"), "W"), vector_from(ex.at("b"), "b"),
                                   ex.value("seed", std::uint64_t{0}));
    const MatrixXd Theta = matrix_from(doc.at("Theta"), "Theta");
    if (Theta.rows() != m.extractor->width() || Theta.cols() != m.loads ||
        m.extractor->input_dim() != m.loads * m.features_per_load) {
      throw FormatError("model file: head dimensions are inconsistent");
    }
    m.params = Eigen::Map<const VectorXd>(Theta.data(), Theta.size());
  }
  if (doc.contains("norm_stats")) {
    const json& s = doc.at("norm_stats");
    NormStats st{vector_from(s.at("feature_mean"), "feature_mean"),
                 vector_from(s.at("feature_std"), "feature_std"),
                 vector_from(s.at("target_mean"), "target_mean"),
                 vector_from(s.at("target_std"), "target_std")};
    if (st.target_mean.size() != m.loads || st.feature_mean.size() != m.loads * m.features_per_load) {
      throw FormatError("model file: normalization statistics have wrong length");
    }
    m.stats = std::move(st);
  }
  return m;
}

void save_model(const ForecastModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << model_to_json(model) << '\n';
  if (!out) throw IoError("failed writing model file " + path.string());
}

ForecastModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return model_from_json(buffer.str());
}

}  // namespace lfu
