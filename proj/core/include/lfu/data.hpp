#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace lfu {

using IndexList = std::vector<int>;

/// Per-column affine normalization. Feature columns follow the dataset's
/// load-major layout (column `l * M + f`); target columns are loads.
struct NormStats {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;
  Eigen::VectorXd target_mean;
  Eigen::VectorXd target_std;
};

/// N samples of an n x M feature matrix and an n-vector of bus loads.
///
/// Features are stored flattened, one row per sample, load-major: the value
/// of feature f for load l lives in column `l * M + f`. Targets are MW
/// unless the dataset carries normalization statistics, in which case both
/// blocks are normalized and `norm_stats()` maps them back.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd features, Eigen::MatrixXd targets, int features_per_load,
          double base_mw = 100.0, std::optional<NormStats> stats = std::nullopt);

  int samples() const { return static_cast<int>(features_.rows()); }
  int loads() const { return static_cast<int>(targets_.cols()); }
  int features_per_load() const { return features_per_load_; }
  double base_mw() const { return base_mw_; }

  const Eigen::MatrixXd& features() const { return features_; }
  const Eigen::MatrixXd& targets() const { return targets_; }

  /// Feature matrix of one sample (n x M).
  Eigen::MatrixXd sample_features(int i) const;

  bool normalized() const { return stats_.has_value(); }
  const std::optional<NormStats>& norm_stats() const { return stats_; }

 private:
  Eigen::MatrixXd features_;
  Eigen::MatrixXd targets_;
  int features_per_load_;
  double base_mw_;
  std::optional<NormStats> stats_;
};

// ---------------------------------------------------------------------------
// Synthetic generation

struct SyntheticConfig {
  std::uint64_t seed = 7;
  int samples = 2000;
  int loads = 14;
  int features_per_load = 10;
  double noise_std = 0.05;
  /// Mean total system load in MW.
  double total_mw = 259.0;
  double base_mw = 100.0;
};

/// Number of trailing calendar channels used for a given M.
int calendar_channels(int features_per_load);

/// Noise-free load map of the synthetic generator. Targets of a generated
/// dataset are `truth(x) + noise`, so with zero noise they are reproduced
/// exactly from the features.
class SyntheticTruth {
 public:
  explicit SyntheticTruth(const SyntheticConfig& config);

  /// Loads (MW) for one raw feature matrix (n x M).
  Eigen::VectorXd operator()(const Eigen::MatrixXd& sample) const;

  const Eigen::VectorXd& base_load() const { return base_load_; }

 private:
  friend Dataset generate_synthetic(const SyntheticConfig& config);

  int loads_;
  int weather_;
  int calendar_;
  Eigen::VectorXd base_load_;      // per load, MW
  Eigen::VectorXd channel_mean_;   // per weather channel
  Eigen::VectorXd channel_scale_;  // per weather channel
  Eigen::VectorXd gain_;           // tanh gain per weather channel
  Eigen::MatrixXd weight_;         // loads x weather
  Eigen::VectorXd hour_peak_;      // per load, radians
  double hour_amplitude_ = 0.15;
  double week_amplitude_ = 0.05;
  double week_peak_ = 0.0;

  // Process parameters for the raw weather channels.
  Eigen::VectorXd diurnal_amp_;
  Eigen::VectorXd seasonal_amp_;
  Eigen::VectorXd seasonal_phase_;
  Eigen::MatrixXd diurnal_phase_;  // loads x weather
};

/// Seeded hourly load profile: weather channels are smooth periodic plus
/// autoregressive processes, the last channels are calendar cos/sin pairs.
Dataset generate_synthetic(const SyntheticConfig& config);

// ---------------------------------------------------------------------------
// CSV

/// Reads the features (`l{load}_f{feat}` header) and targets (`l{load}`
/// header) files. When `features_per_load` is not given it is inferred from
/// the header.
Dataset load_csv(const std::filesystem::path& features_path,
                 const std::filesystem::path& targets_path,
                 std::optional<int> features_per_load = std::nullopt, double base_mw = 100.0);

/// Writes both files with shortest round-trip formatting.
void write_csv(const Dataset& dataset, const std::filesystem::path& features_path,
               const std::filesystem::path& targets_path);

// ---------------------------------------------------------------------------
// Normalization

/// Fits mean / population std on `fit_idx` rows and applies them to all rows.
/// Constant channels get std 1.
std::pair<Dataset, NormStats> normalize(const Dataset& dataset, std::span<const int> fit_idx);

/// Applies previously fitted statistics to a raw dataset.
Dataset apply_normalization(const Dataset& raw, const NormStats& stats);

/// Inverse of `normalize`.
Dataset denormalize(const Dataset& normalized);

/// Normalized target row -> MW.
Eigen::VectorXd denormalize_targets(const NormStats& stats, const Eigen::VectorXd& normalized);

// ---------------------------------------------------------------------------
// Splits

enum class UnlearnPolicy { FirstK, SeededRandom };

/// Which part of the training data the trained parameters were fitted on.
enum class UnlearnScope { Train, Sensitive };

struct SplitConfig {
  double train_frac = 0.8;
  double pretrain_frac = 0.3;
  double unlearn_ratio = 0.0;
  UnlearnPolicy policy = UnlearnPolicy::SeededRandom;
  UnlearnScope scope = UnlearnScope::Train;
  std::uint64_t seed = 0;
};

struct SplitPlan {
  IndexList train_idx;
  IndexList test_idx;
  IndexList pretrain_idx;
  IndexList sensitive_idx;
  IndexList unlearn_idx;
  IndexList remain_idx;

  /// Rows the model was trained on (train or sensitive).
  const IndexList& scope_idx() const { return scope == UnlearnScope::Train ? train_idx : sensitive_idx; }
  UnlearnScope scope = UnlearnScope::Train;
};

/// Chronological train/test and pretrain/sensitive cuts, then an unlearn
/// draw from the configured scope.
SplitPlan make_splits(int samples, const SplitConfig& config);

}  // namespace lfu
