#include "lfu/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "lfu/error.hpp"

namespace lfu {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kHoursPerYear = 8766.0;
constexpr double kNoiseTruncation = 4.0;

}  // namespace

Dataset::Dataset(Eigen::MatrixXd features, Eigen::MatrixXd targets, int features_per_load,
                 double base_mw, std::optional<NormStats> stats)
    : features_(std::move(features)),
      targets_(std::move(targets)),
      features_per_load_(features_per_load),
      base_mw_(base_mw),
      stats_(std::move(stats)) {
  if (features_.rows() < 1) throw ConfigError("dataset needs at least one sample");
  if (features_.rows() != targets_.rows()) {
    throw ConfigError("features and targets disagree on the number of samples (" +
                      std::to_string(features_.rows()) + " vs " + std::to_string(targets_.rows()) +
                      ")");
  }
  if (features_per_load_ < 1 || targets_.cols() < 1 ||
      features_.cols() != targets_.cols() * features_per_load_) {
    throw ConfigError("feature columns must equal loads x features_per_load");
  }
  if (!(base_mw_ > 0.0)) throw ConfigError("base_mw must be positive");
  if (stats_) {
    if (stats_->feature_mean.size() != features_.cols() ||
        stats_->feature_std.size() != features_.cols() ||
        stats_->target_mean.size() != targets_.cols() ||
        stats_->target_std.size() != targets_.cols()) {
      throw ConfigError("normalization statistics do not match dataset dimensions");
    }
  }
}

Eigen::MatrixXd Dataset::sample_features(int i) const {
  const int n = loads();
  const int m = features_per_load_;
  Eigen::MatrixXd x(n, m);
  for (int l = 0; l < n; ++l) {
    for (int f = 0; f < m; ++f) x(l, f) = features_(i, l * m + f);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Synthetic generation

int calendar_channels(int features_per_load) {
  if (features_per_load >= 5) return 4;
  if (features_per_load >= 3) return 2;
  return 0;
}

SyntheticTruth::SyntheticTruth(const SyntheticConfig& config)
    : loads_(config.loads),
      weather_(config.features_per_load - calendar_channels(config.features_per_load)),
      calendar_(calendar_channels(config.features_per_load)) {
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  base_load_.resize(loads_);
  for (int l = 0; l < loads_; ++l) base_load_(l) = 0.5 + unit(rng);
  base_load_ *= config.total_mw / base_load_.sum();

  channel_mean_.resize(weather_);
  diurnal_amp_.resize(weather_);
  seasonal_amp_.resize(weather_);
  seasonal_phase_.resize(weather_);
  channel_scale_.resize(weather_);
  gain_.resize(weather_);
  Eigen::VectorXd shared_weight(weather_);
  for (int k = 0; k < weather_; ++k) {
    channel_mean_(k) = 10.0 * (k + 1) + 5.0 * unit(rng);
    diurnal_amp_(k) = 0.5 + unit(rng);
    seasonal_amp_(k) = 1.0 + unit(rng);
    seasonal_phase_(k) = kTwoPi * unit(rng);
    // AR components contribute unit variance in total (see generate_synthetic).
    channel_scale_(k) = std::sqrt(0.5 * diurnal_amp_(k) * diurnal_amp_(k) +
                                  0.5 * seasonal_amp_(k) * seasonal_amp_(k) + 1.0);
    gain_(k) = 0.8 + 0.8 * unit(rng);
    shared_weight(k) = 2.0 * unit(rng) - 1.0;
  }

  weight_.resize(loads_, weather_);
  diurnal_phase_.resize(loads_, weather_);
  hour_peak_.resize(loads_);
  for (int l = 0; l < loads_; ++l) {
    for (int k = 0; k < weather_; ++k) {
      weight_(l, k) = shared_weight(k) * (1.0 + 0.3 * normal(rng));
      diurnal_phase_(l, k) = 0.6 * unit(rng) - 0.3;
    }
    // Evening peak around 18h with a per-load shift of up to +-2h.
    hour_peak_(l) = kTwoPi * (18.0 + 4.0 * unit(rng) - 2.0) / 24.0;
    const double total = weight_.row(l).cwiseAbs().sum();
    if (total > 0.0) weight_.row(l) *= 0.35 / total;
  }
  week_peak_ = kTwoPi * unit(rng);
}

Eigen::VectorXd SyntheticTruth::operator()(const Eigen::MatrixXd& sample) const {
  if (sample.rows() != loads_ || sample.cols() != weather_ + calendar_) {
    throw ConfigError("sample shape does not match the synthetic configuration");
  }
  Eigen::VectorXd y(loads_);
  for (int l = 0; l < loads_; ++l) {
    double level = 1.0;
    for (int k = 0; k < weather_; ++k) {
      const double u = (sample(l, k) - channel_mean_(k)) / channel_scale_(k);
      level += weight_(l, k) * std::tanh(gain_(k) * u);
    }
    if (calendar_ >= 2) {
      const double hour_angle = std::atan2(sample(l, weather_ + 1), sample(l, weather_));
      level += hour_amplitude_ * std::tanh(2.0 * std::cos(hour_angle - hour_peak_(l)));
    }
    if (calendar_ >= 4) {
      const double day_angle = std::atan2(sample(l, weather_ + 3), sample(l, weather_ + 2));
      level += week_amplitude_ * std::tanh(2.0 * std::cos(day_angle - week_peak_));
    }
    y(l) = base_load_(l) * level;
  }
  return y;
}

Dataset generate_synthetic(const SyntheticConfig& config) {
  if (config.samples < 10) throw ConfigError("synthetic generation needs at least 10 samples");
  if (config.loads < 1) throw ConfigError("number of loads must be positive");
  if (config.features_per_load < 2) throw ConfigError("features per load must be at least 2");
  if (!(config.noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
  if (!(config.total_mw > 0.0) || !(config.base_mw > 0.0)) {
    throw ConfigError("total_mw and base_mw must be positive");
  }

  const SyntheticTruth truth(config);
  const int n = config.loads;
  const int m = config.features_per_load;
  const int w = truth.weather_;
  const int cal = truth.calendar_;

  // Separate stream so the truth parameters do not depend on N.
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd features(config.samples, n * m);
  Eigen::MatrixXd targets(config.samples, n);

  // Regional AR(1) with stationary variance 0.64, local AR(1) with 0.36.
  const double regional_rho = 0.95;
  const double local_rho = 0.8;
  const double regional_sd = 0.8 * std::sqrt(1.0 - regional_rho * regional_rho);
  const double local_sd = 0.6 * std::sqrt(1.0 - local_rho * local_rho);
  Eigen::VectorXd regional = Eigen::VectorXd::Zero(w);
  Eigen::MatrixXd local = Eigen::MatrixXd::Zero(n, w);
  for (int k = 0; k < w; ++k) regional(k) = 0.8 * normal(rng);
  for (int l = 0; l < n; ++l) {
    for (int k = 0; k < w; ++k) local(l, k) = 0.6 * normal(rng);
  }

  for (int t = 0; t < config.samples; ++t) {
    if (t > 0) {
      for (int k = 0; k < w; ++k) regional(k) = regional_rho * regional(k) + regional_sd * normal(rng);
      for (int l = 0; l < n; ++l) {
        for (int k = 0; k < w; ++k) local(l, k) = local_rho * local(l, k) + local_sd * normal(rng);
      }
    }
    const double hour = static_cast<double>(t % 24);
    const double day = static_cast<double>((t / 24) % 7);
    Eigen::MatrixXd x(n, m);
    for (int l = 0; l < n; ++l) {
      for (int k = 0; k < w; ++k) {
        x(l, k) = truth.channel_mean_(k) +
                  truth.diurnal_amp_(k) * std::sin(kTwoPi * hour / 24.0 + truth.diurnal_phase_(l, k)) +
                  truth.seasonal_amp_(k) * std::sin(kTwoPi * t / kHoursPerYear + truth.seasonal_phase_(k)) +
                  regional(k) + local(l, k);
      }
      if (cal >= 2) {
        x(l, w) = std::cos(kTwoPi * hour / 24.0);
        x(l, w + 1) = std::sin(kTwoPi * hour / 24.0);
      }
      if (cal >= 4) {
        x(l, w + 2) = std::cos(kTwoPi * day / 7.0);
        x(l, w + 3) = std::sin(kTwoPi * day / 7.0);
      }
      for (int f = 0; f < m; ++f) features(t, l * m + f) = x(l, f);
    }

    const Eigen::VectorXd clean = truth(x);
    for (int l = 0; l < n; ++l) {
      double value = clean(l);
      if (config.noise_std > 0.0) {
        double eps = normal(rng);
        while (std::abs(eps) > kNoiseTruncation) eps = normal(rng);
        value += truth.base_load_(l) * config.noise_std * eps;
      }
      targets(t, l) = std::max(value, 0.01 * truth.base_load_(l));
    }
  }
  return Dataset(std::move(features), std::move(targets), m, config.base_mw);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                       : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& cell : cells) {
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
      cell.remove_suffix(1);
    }
  }
  return cells;
}

double parse_number(std::string_view cell, const std::filesystem::path& path, int line) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": non-numeric cell '" +
                      std::string(cell) + "'");
  }
  return value;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::string_view view(line);
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto cells = split_line(view);
    if (table.header.empty()) {
      for (auto cell : cells) table.header.emplace_back(cell);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(table.header.size()) + " cells, found " +
                        std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto cell : cells) row.push_back(parse_number(cell, path, line_no));
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw FormatError(path.string() + ": missing header");
  return table;
}

std::optional<std::pair<int, int>> parse_feature_name(const std::string& name) {
  int load = 0;
  int feat = 0;
  if (name.size() < 5 || name[0] != 'l') return std::nullopt;
  const auto sep = name.find("_f");
  if (sep == std::string::npos) return std::nullopt;
  const char* a = name.data() + 1;
  const char* a_end = name.data() + sep;
  const char* b = name.data() + sep + 2;
  const char* b_end = name.data() + name.size();
  auto r1 = std::from_chars(a, a_end, load);
  auto r2 = std::from_chars(b, b_end, feat);
  if (r1.ec != std::errc() || r1.ptr != a_end || r2.ec != std::errc() || r2.ptr != b_end) {
    return std::nullopt;
  }
  return std::make_pair(load, feat);
}

void append_number(std::string& out, double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  out.append(buffer, ptr);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& features_path,
                 const std::filesystem::path& targets_path, std::optional<int> features_per_load,
                 double base_mw) {
  const CsvTable feat = read_table(features_path);
  const CsvTable targ = read_table(targets_path);
  if (feat.rows.size() != targ.rows.size()) {
    throw FormatError("row count mismatch: " + std::to_string(feat.rows.size()) + " feature rows vs " +
                      std::to_string(targ.rows.size()) + " target rows");
  }
  if (feat.rows.empty()) throw FormatError("no data rows in " + features_path.string());

  const int cols = static_cast<int>(feat.header.size());
  int m = 0;
  if (features_per_load) {
    m = *features_per_load;
    if (m < 1 || cols % m != 0) {
      throw FormatError("feature column count " + std::to_string(cols) +
                        " is not divisible by features_per_load " + std::to_string(m));
    }
  } else {
    for (const auto& name : feat.header) {
      const auto parsed = parse_feature_name(name);
      if (!parsed) throw FormatError("bad feature column name '" + name + "'");
      m = std::max(m, parsed->second + 1);
    }
    if (cols % m != 0) {
      throw FormatError("feature column count " + std::to_string(cols) +
                        " is not divisible by inferred features_per_load " + std::to_string(m));
    }
  }
  const int n = cols / m;
  if (static_cast<int>(targ.header.size()) != n) {
    throw FormatError("targets have " + std::to_string(targ.header.size()) + " columns, expected " +
                      std::to_string(n));
  }
  for (int c = 0; c < cols; ++c) {
    const auto parsed = parse_feature_name(feat.header[c]);
    if (parsed && (parsed->first != c / m || parsed->second != c % m)) {
      throw FormatError("feature column '" + feat.header[c] + "' is out of load-major order");
    }
  }

  const int rows = static_cast<int>(feat.rows.size());
  Eigen::MatrixXd features(rows, cols);
  Eigen::MatrixXd targets(rows, n);
  for (int i = 0; i < rows; ++i) {
    for (int c = 0; c < cols; ++c) features(i, c) = feat.rows[i][c];
    for (int l = 0; l < n; ++l) targets(i, l) = targ.rows[i][l];
  }
  return Dataset(std::move(features), std::move(targets), m, base_mw);
}

void write_csv(const Dataset& dataset, const std::filesystem::path& features_path,
               const std::filesystem::path& targets_path) {
  const int n = dataset.loads();
  const int m = dataset.features_per_load();
  std::string out;
  for (int l = 0; l < n; ++l) {
    for (int f = 0; f < m; ++f) {
      if (l + f > 0) out += ',';
      out += "l" + std::to_string(l) + "_f" + std::to_string(f);
    }
  }
  out += '\n';
  for (int i = 0; i < dataset.samples(); ++i) {
    for (int c = 0; c < n * m; ++c) {
      if (c > 0) out += ',';
      append_number(out, dataset.features()(i, c));
    }
    out += '\n';
  }
  std::ofstream fout(features_path, std::ios::binary);
  if (!fout) throw IoError("cannot write " + features_path.string());
  fout << out;

  out.clear();
  for (int l = 0; l < n; ++l) {
    if (l > 0) out += ',';
    out += "l" + std::to_string(l);
  }
  out += '\n';
  for (int i = 0; i < dataset.samples(); ++i) {
    for (int l = 0; l < n; ++l) {
      if (l > 0) out += ',';
      append_number(out, dataset.targets()(i, l));
    }
    out += '\n';
  }
  std::ofstream tout(targets_path, std::ios::binary);
  if (!tout) throw IoError("cannot write " + targets_path.string());
  tout << out;
  if (!fout || !tout) throw IoError("write failed");
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

void fit_columns(const Eigen::MatrixXd& data, std::span<const int> idx, Eigen::VectorXd& mean,
                 Eigen::VectorXd& stdev) {
  const auto cols = data.cols();
  mean = Eigen::VectorXd::Zero(cols);
  stdev = Eigen::VectorXd::Zero(cols);
  const double count = static_cast<double>(idx.size());
  for (int i : idx) mean += data.row(i).transpose();
  mean /= count;
  for (int i : idx) stdev += (data.row(i).transpose() - mean).array().square().matrix();
  stdev = (stdev / count).cwiseSqrt();
  for (Eigen::Index c = 0; c < cols; ++c) {
    if (!(stdev(c) > 1e-12 * std::max(1.0, std::abs(mean(c))))) stdev(c) = 1.0;
  }
}

void check_rows(std::span<const int> idx, int rows) {
  for (int i : idx) {
    if (i < 0 || i >= rows) throw ConfigError("row index " + std::to_string(i) + " out of range");
  }
}

}  // namespace

std::pair<Dataset, NormStats> normalize(const Dataset& dataset, std::span<const int> fit_idx) {
  if (dataset.normalized()) throw ConfigError("dataset is already normalized");
  if (fit_idx.empty()) throw ConfigError("normalization needs a non-empty fit set");
  check_rows(fit_idx, dataset.samples());
  NormStats stats;
  fit_columns(dataset.features(), fit_idx, stats.feature_mean, stats.feature_std);
  fit_columns(dataset.targets(), fit_idx, stats.target_mean, stats.target_std);
  Dataset out = apply_normalization(dataset, stats);
  return {std::move(out), std::move(stats)};
}

Dataset apply_normalization(const Dataset& raw, const NormStats& stats) {
  if (raw.normalized()) throw ConfigError("dataset is already normalized");
  if (stats.feature_mean.size() != raw.features().cols() ||
      stats.target_mean.size() != raw.targets().cols()) {
    throw ConfigError("normalization statistics do not match dataset dimensions");
  }
  Eigen::MatrixXd features =
      ((raw.features().rowwise() - stats.feature_mean.transpose()).array().rowwise() /
       stats.feature_std.transpose().array())
          .matrix();
  Eigen::MatrixXd targets =
      ((raw.targets().rowwise() - stats.target_mean.transpose()).array().rowwise() /
       stats.target_std.transpose().array())
          .matrix();
  return Dataset(std::move(features), std::move(targets), raw.features_per_load(), raw.base_mw(),
                 stats);
}

Dataset denormalize(const Dataset& normalized) {
  if (!normalized.normalized()) throw ConfigError("dataset is not normalized");
  const NormStats& stats = *normalized.norm_stats();
  Eigen::MatrixXd features =
      ((normalized.features().array().rowwise() * stats.feature_std.transpose().array()).rowwise() +
       stats.feature_mean.transpose().array())
          .matrix();
  Eigen::MatrixXd targets =
      ((normalized.targets().array().rowwise() * stats.target_std.transpose().array()).rowwise() +
       stats.target_mean.transpose().array())
          .matrix();
  return Dataset(std::move(features), std::move(targets), normalized.features_per_load(),
                 normalized.base_mw());
}

Eigen::VectorXd denormalize_targets(const NormStats& stats, const Eigen::VectorXd& normalized) {
  return (normalized.array() * stats.target_std.array() + stats.target_mean.array()).matrix();
}

// ---------------------------------------------------------------------------
// Splits

namespace {

int fraction_count(double frac, std::size_t total) {
  return static_cast<int>(std::floor(frac * static_cast<double>(total) + 1e-9));
}

}  // namespace

SplitPlan make_splits(int samples, const SplitConfig& config) {
  if (samples < 2) throw ConfigError("need at least two samples to split");
  if (!(config.train_frac > 0.0 && config.train_frac <= 1.0)) {
    throw ConfigError("train_frac must be in (0, 1]");
  }
  if (!(config.pretrain_frac >= 0.0 && config.pretrain_frac < 1.0)) {
    throw ConfigError("pretrain_frac must be in [0, 1)");
  }
  if (!(config.unlearn_ratio >= 0.0 && config.unlearn_ratio < 1.0)) {
    throw ConfigError("unlearn_ratio must be in [0, 1) so that the remaining set is non-empty");
  }

  SplitPlan plan;
  plan.scope = config.scope;
  const int n_train = fraction_count(config.train_frac, static_cast<std::size_t>(samples));
  if (n_train < 1) throw ConfigError("train split is empty");
  for (int i = 0; i < samples; ++i) (i < n_train ? plan.train_idx : plan.test_idx).push_back(i);

  const int n_pre = fraction_count(config.pretrain_frac, plan.train_idx.size());
  for (int j = 0; j < n_train; ++j) {
    (j < n_pre ? plan.pretrain_idx : plan.sensitive_idx).push_back(plan.train_idx[j]);
  }

  const IndexList& scope = plan.scope_idx();
  if (scope.empty()) throw ConfigError("unlearning scope is empty");
  const int k = fraction_count(config.unlearn_ratio, scope.size());
  if (k >= static_cast<int>(scope.size())) {
    throw ConfigError("unlearn set would consume the whole scope; remaining set must be non-empty");
  }

  if (config.policy == UnlearnPolicy::FirstK) {
    plan.unlearn_idx.assign(scope.begin(), scope.begin() + k);
  } else {
    // Partial Fisher-Yates over positions in the scope.
    std::vector<int> pos(scope.size());
    for (std::size_t j = 0; j < pos.size(); ++j) pos[j] = static_cast<int>(j);
    std::mt19937_64 rng(config.seed);
    for (int j = 0; j < k; ++j) {
      std::uniform_int_distribution<int> pick(j, static_cast<int>(pos.size()) - 1);
      std::swap(pos[j], pos[pick(rng)]);
    }
    for (int j = 0; j < k; ++j) plan.unlearn_idx.push_back(scope[pos[j]]);
    std::sort(plan.unlearn_idx.begin(), plan.unlearn_idx.end());
  }
  std::set_difference(scope.begin(), scope.end(), plan.unlearn_idx.begin(), plan.unlearn_idx.end(),
                      std::back_inserter(plan.remain_idx));
  return plan;
}

}  // namespace lfu
