#include "lfu/engine.hpp"

#include <algorithm>
#include <charconv>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lfu/error.hpp"

namespace lfu {

using Eigen::VectorXd;
using nlohmann::json;

UnlearnMode parse_mode(const std::string& text) {
  if (text == "complete") return UnlearnMode::Complete;
  if (text == "pamu-mse") return UnlearnMode::PamuMse;
  if (text == "pamu-mape") return UnlearnMode::PamuMape;
  if (text == "tamu") return UnlearnMode::Tamu;
  throw ConfigError("unknown mode '" + text + "' (expected complete, pamu-mse, pamu-mape or tamu)");
}

const char* to_string(UnlearnMode mode) {
  switch (mode) {
    case UnlearnMode::Complete: return "complete";
    case UnlearnMode::PamuMse: return "pamu-mse";
    case UnlearnMode::PamuMape: return "pamu-mape";
    case UnlearnMode::Tamu: return "tamu";
  }
  return "?";
}

LossKind mode_criterion(UnlearnMode mode) {
  switch (mode) {
    case UnlearnMode::PamuMape: return LossKind::MAPE;
    case UnlearnMode::Tamu: return LossKind::TaskCost;
    default: return LossKind::MSE;
  }
}

UnlearnPolicy parse_policy(const std::string& text) {
  if (text == "first-k") return UnlearnPolicy::FirstK;
  if (text == "random") return UnlearnPolicy::SeededRandom;
  throw ConfigError("unknown unlearn policy '" + text + "' (expected first-k or random)");
}

const char* to_string(UnlearnPolicy policy) {
  return policy == UnlearnPolicy::FirstK ? "first-k" : "random";
}

UnlearnScope scope_for(ModelKind kind) {
  return kind == ModelKind::Linear ? UnlearnScope::Train : UnlearnScope::Sensitive;
}

SweepKind parse_sweep(const std::string& text) {
  if (text == "ratio") return SweepKind::Ratio;
  if (text == "lambda1") return SweepKind::Lambda1;
  throw ConfigError("unknown sweep '" + text + "' (expected ratio or lambda1)");
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

SplitConfig base_split(SplitConfig split, ModelKind kind) {
  split.unlearn_ratio = 0.0;
  split.scope = scope_for(kind);
  return split;
}

void check_grid(const std::optional<GridCase>& grid, const Dataset& data) {
  if (grid && grid->loads() != data.loads()) {
    throw ConfigError("grid case has " + std::to_string(grid->loads()) + " loads, dataset has " +
                      std::to_string(data.loads()));
  }
}

}  // namespace

Experiment train_experiment(const Dataset& raw, const TrainConfig& config,
                            std::optional<GridCase> grid) {
  if (raw.normalized()) throw ConfigError("training expects a raw (unnormalized) dataset");
  check_grid(grid, raw);
  const SplitConfig split = base_split(config.split, config.kind);
  SplitPlan plan = make_splits(raw.samples(), split);
  auto [data, stats] = normalize(raw, plan.train_idx);
  ForecastModel model = config.kind == ModelKind::Linear
                            ? fit_linear(data, plan.scope_idx(), {}, stats)
                            : fit_head(FeatureExtractor::random(raw.loads() * raw.features_per_load(),
                                                                config.head_width, config.extractor_seed),
                                       data, plan.scope_idx(), {}, stats);
  return Experiment{std::move(data), split, std::move(plan), std::move(model), std::move(grid)};
}

Experiment attach_experiment(const Dataset& raw, ForecastModel model, const SplitConfig& split,
                             std::optional<GridCase> grid) {
  if (!model.stats) throw ConfigError("model carries no normalization statistics");
  if (model.loads != raw.loads() || model.features_per_load != raw.features_per_load()) {
    throw ConfigError("model and dataset dimensions differ");
  }
  check_grid(grid, raw);
  const SplitConfig base = base_split(split, model.kind);
  SplitPlan plan = make_splits(raw.samples(), base);
  Dataset data = apply_normalization(raw, *model.stats);
  return Experiment{std::move(data), base, std::move(plan), std::move(model), std::move(grid)};
}

// ---------------------------------------------------------------------------
// Unlearning

const PartMetric* UnlearnReport::find(const std::string& part, LossKind criterion) const {
  for (const auto& m : metrics) {
    if (m.part == part && m.criterion == criterion) return &m;
  }
  return nullptr;
}

ReweightBasis prepare_unlearn(const Experiment& exp, const UnlearnRequest& request) {
  if (request.mode == UnlearnMode::Tamu && !exp.grid) {
    throw ConfigError("mode tamu needs a grid case (--case)");
  }
  SplitConfig split = exp.split;
  split.unlearn_ratio = request.ratio;
  split.policy = request.policy;
  split.seed = request.seed;
  const SplitPlan plan = make_splits(exp.data.samples(), split);

  ReweightBasis basis;
  basis.unlearn_idx = plan.unlearn_idx;
  basis.remain_idx = plan.remain_idx;
  if (request.mode == UnlearnMode::Complete) return basis;

  const Design design(exp.model, exp.data);
  const CriterionEvaluator eval(design, exp.grid_ptr());
  const MTilde mt =
      m_tilde(eval, exp.model.params, basis.remain_idx, plan.test_idx, mode_criterion(request.mode));
  basis.scores = influence_scores(design, exp.model.params, mt.m, basis.remain_idx);
  basis.cg_iterations = mt.cg_iterations;
  basis.skipped_samples = mt.test_skipped;
  return basis;
}

namespace {

const std::vector<int>& part_indices(const std::string& part, const ReweightBasis& basis,
                                     const SplitPlan& plan) {
  if (part == "remain") return basis.remain_idx;
  if (part == "unlearn") return basis.unlearn_idx;
  if (part == "test") return plan.test_idx;
  throw ConfigError("unknown dataset part '" + part + "'");
}

std::vector<LossKind> criteria(const MetricOptions& opts, bool has_grid) {
  std::vector<LossKind> out;
  if (opts.mse) out.push_back(LossKind::MSE);
  if (opts.mape) out.push_back(LossKind::MAPE);
  if (opts.cost && has_grid) out.push_back(LossKind::TaskCost);
  return out;
}

/// Shared by run_unlearn and lambda1 sweeps; `reuse` supplies before/retrain
/// metrics that do not depend on the weights.
UnlearnReport unlearn_impl(const Experiment& exp, const UnlearnRequest& request,
                           const ReweightBasis& basis, const MetricOptions& opts,
                           const UnlearnReport* reuse) {
  const Design design(exp.model, exp.data);
  UnlearnReport report;
  report.request = request;
  report.unlearn_idx = basis.unlearn_idx;
  report.remain_idx = basis.remain_idx;
  report.theta_before = exp.model.params;
  report.cg_iterations = basis.cg_iterations;
  report.skipped_samples = basis.skipped_samples;

  if (request.mode == UnlearnMode::Complete) {
    report.epsilon = VectorXd::Ones(static_cast<Eigen::Index>(basis.remain_idx.size()));
  } else {
    report.epsilon = reweight(basis.scores, {request.lambda1, request.lambda_inf, request.clamp_nonnegative});
    report.predicted_objective = report.epsilon.dot(basis.scores);
  }
  const std::span<const double> eps(report.epsilon.data(), static_cast<std::size_t>(report.epsilon.size()));
  // Nothing to remove and nothing reweighted: the trained model is kept as is
  // rather than taking a rounding-sized Newton step.
  const bool noop = basis.unlearn_idx.empty() && (report.epsilon.array() == 1.0).all();
  report.theta_after = noop ? exp.model.params
                            : apply_reweighted_update(design, exp.model.params, basis.remain_idx, eps,
                                                      {request.unweighted_hessian});
  report.theta_retrain = reuse ? reuse->theta_retrain : retrain_oracle(design, basis.remain_idx);
  const VectorXd diff = report.theta_after - report.theta_retrain;
  report.distance_to_retrain = diff.norm();
  const double scale = report.theta_retrain.cwiseAbs().maxCoeff();
  report.relative_distance = scale > 0.0 ? diff.cwiseAbs().maxCoeff() / scale : diff.cwiseAbs().maxCoeff();

  const CriterionEvaluator eval(design, exp.grid_ptr());
  for (const std::string& part : opts.parts) {
    const std::vector<int>& idx = part_indices(part, basis, exp.plan);
    if (idx.empty()) continue;
    for (LossKind kind : criteria(opts, exp.grid.has_value())) {
      PartMetric m;
      m.part = part;
      m.criterion = kind;
      const PartMetric* prev = reuse ? reuse->find(part, kind) : nullptr;
      m.before = prev ? prev->before : eval.mean(report.theta_before, idx, kind);
      m.after = eval.mean(report.theta_after, idx, kind);
      m.retrain = prev ? prev->retrain : eval.mean(report.theta_retrain, idx, kind);
      report.metrics.push_back(m);
    }
  }
  return report;
}

void append_rows(std::vector<SweepRow>& rows, double value, const UnlearnReport& report) {
  for (const auto& m : report.metrics) {
    rows.push_back({value, m.part, to_string(m.criterion), m.before, m.after, m.retrain,
                    report.distance_to_retrain});
  }
}

}  // namespace

UnlearnReport run_unlearn(const Experiment& exp, const UnlearnRequest& request,
                          const MetricOptions& metrics) {
  return unlearn_impl(exp, request, prepare_unlearn(exp, request), metrics, nullptr);
}

UnlearnReport run_unlearn(const Experiment& exp, const UnlearnRequest& request,
                          const ReweightBasis& basis, const MetricOptions& metrics) {
  return unlearn_impl(exp, request, basis, metrics, nullptr);
}

std::vector<SweepRow> run_sweep(const Experiment& exp, const UnlearnRequest& base, SweepKind kind,
                                const std::vector<double>& values, const MetricOptions& metrics) {
  std::vector<SweepRow> rows;
  if (kind == SweepKind::Ratio) {
    for (double v : values) {
      UnlearnRequest req = base;
      req.ratio = v;
      append_rows(rows, v, run_unlearn(exp, req, metrics));
    }
    return rows;
  }
  if (base.mode == UnlearnMode::Complete) {
    throw ConfigError("a lambda1 sweep needs a reweighting mode (pamu-mse, pamu-mape or tamu)");
  }
  const ReweightBasis basis = prepare_unlearn(exp, base);
  std::optional<UnlearnReport> first;
  for (double v : values) {
    UnlearnRequest req = base;
    req.lambda1 = v;
    UnlearnReport report = unlearn_impl(exp, req, basis, metrics, first ? &*first : nullptr);
    append_rows(rows, v, report);
    if (!first) first = std::move(report);
  }
  return rows;
}

InfluenceAnalysis run_influence(const Experiment& exp, const UnlearnRequest& request, int per_class) {
  if (!exp.grid) throw ConfigError("influence analysis needs a grid case (--case)");
  if (per_class < 1) throw ConfigError("per-class sample count must be positive");
  SplitConfig split = exp.split;
  split.unlearn_ratio = request.ratio;
  split.policy = request.policy;
  split.seed = request.seed;
  const SplitPlan plan = make_splits(exp.data.samples(), split);

  const Design design(exp.model, exp.data);
  const CriterionEvaluator eval(design, exp.grid_ptr());
  InfluenceAnalysis out;
  out.samples = plan.remain_idx;
  const InfluenceReport mse = influence_report(eval, exp.model.params, plan.remain_idx, plan.test_idx, LossKind::MSE);
  const InfluenceReport mape = influence_report(eval, exp.model.params, plan.remain_idx, plan.test_idx, LossKind::MAPE);
  const InfluenceReport cost = influence_report(eval, exp.model.params, plan.remain_idx, plan.test_idx, LossKind::TaskCost);
  out.mse = mse.scores;
  out.mape = mape.scores;
  out.cost = cost.scores;
  out.classes = mse.classes;
  out.skipped_samples = cost.test_skipped;

  // Equal-size class subsample, drawn after all scores are known.
  std::vector<int> under;
  std::vector<int> over;
  for (int k = 0; k < static_cast<int>(out.classes.size()); ++k) {
    (out.classes[k] == GenerationClass::Under ? under : over).push_back(k);
  }
  std::mt19937_64 rng(request.seed ^ 0x5bd1e995u);
  auto shuffle = [&](std::vector<int>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
  };
  shuffle(under);
  shuffle(over);
  const std::size_t take = std::min({static_cast<std::size_t>(per_class), under.size(), over.size()});
  out.subsample.assign(under.begin(), under.begin() + static_cast<std::ptrdiff_t>(take));
  out.subsample.insert(out.subsample.end(), over.begin(), over.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(out.subsample.begin(), out.subsample.end());
  if (take < 2) throw NumericalError("too few samples per generation class for correlations");

  const std::array<const VectorXd*, 3> cols = {&out.mse, &out.mape, &out.cost};
  std::array<VectorXd, 3> sub;
  for (int c = 0; c < 3; ++c) {
    sub[c].resize(static_cast<Eigen::Index>(out.subsample.size()));
    for (std::size_t k = 0; k < out.subsample.size(); ++k) sub[c](static_cast<Eigen::Index>(k)) = (*cols[c])(out.subsample[k]);
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = r + 1; c < 3; ++c) {
      out.pearson(r, c) = out.pearson(c, r) = pearson(sub[r], sub[c]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string report_to_json(const UnlearnReport& r) {
  json doc;
  doc["mode"] = to_string(r.request.mode);
  doc["ratio"] = r.request.ratio;
  doc["lambda1"] = r.request.lambda1;
  doc["lambda_inf"] = r.request.lambda_inf;
  doc["policy"] = to_string(r.request.policy);
  doc["seed"] = r.request.seed;
  doc["unlearn_count"] = r.unlearn_idx.size();
  doc["remain_count"] = r.remain_idx.size();
  doc["unlearn_idx"] = r.unlearn_idx;
  doc["distance_to_retrain"] = r.distance_to_retrain;
  doc["relative_distance"] = r.relative_distance;
  doc["predicted_objective"] = r.predicted_objective;
  doc["cg_iterations"] = r.cg_iterations;
  doc["skipped_samples"] = r.skipped_samples;
  doc["theta_before"] = to_vec(r.theta_before);
  doc["theta_after"] = to_vec(r.theta_after);
  doc["theta_retrain"] = to_vec(r.theta_retrain);
  doc["epsilon"] = to_vec(r.epsilon);
  json metrics = json::array();
  for (const auto& m : r.metrics) {
    metrics.push_back({{"part", m.part},
                       {"criterion", to_string(m.criterion)},
                       {"before", m.before},
                       {"after", m.after},
                       {"retrain", m.retrain}});
  }
  doc["metrics"] = metrics;
  return doc.dump(1);
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "sweep_value,part,criterion,before,after,retrain,distance\n";
  for (const auto& r : rows) {
    out << fmt(r.sweep_value) << ',' << r.part << ',' << r.criterion << ',' << fmt(r.before) << ','
        << fmt(r.after) << ',' << fmt(r.retrain) << ',' << fmt(r.distance) << '\n';
  }
  return out.str();
}

std::string scores_to_csv(const InfluenceAnalysis& a, LossKind selected) {
  const VectorXd& chosen = selected == LossKind::MAPE ? a.mape : (selected == LossKind::TaskCost ? a.cost : a.mse);
  std::ostringstream out;
  out << "idx,a_i,I_mse,I_mape,I_cost,class\n";
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    const auto e = static_cast<Eigen::Index>(k);
    out << a.samples[k] << ',' << fmt(chosen(e)) << ',' << fmt(a.mse(e)) << ',' << fmt(a.mape(e)) << ','
        << fmt(a.cost(e)) << ',' << to_string(a.classes[k]) << '\n';
  }
  return out.str();
}

std::string pearson_to_json(const InfluenceAnalysis& a) {
  json doc;
  doc["order"] = {"mse", "mape", "cost"};
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({a.pearson(r, 0), a.pearson(r, 1), a.pearson(r, 2)});
  doc["pearson"] = rows;
  int under = 0;
  for (int k : a.subsample) under += a.classes[k] == GenerationClass::Under ? 1 : 0;
  doc["subsample_size"] = a.subsample.size();
  doc["subsample_under"] = under;
  doc["subsample_over"] = static_cast<int>(a.subsample.size()) - under;
  doc["samples"] = a.samples.size();
  doc["skipped_test_samples"] = a.skipped_samples;
  return doc.dump(1);
}

}  // namespace lfu
