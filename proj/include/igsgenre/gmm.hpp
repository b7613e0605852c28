#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "igsgenre/matrix.hpp"
#include "json.hpp"

namespace igsgenre::gmm {

/// Per-dimension affine map z = (x - shift) / scale applied before the
/// mixture is evaluated. Empty vectors mean identity.
struct Normalization {
  std::vector<double> shift;
  std::vector<double> scale;

  bool identity() const noexcept { return shift.empty(); }
  friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// Diagonal-covariance Gaussian mixture. Immutable once built; safe to
/// share between threads for scoring.
///
/// When a normalization is present the mixture parameters live in the
/// normalized space and log_likelihood() adds the Jacobian term
/// -sum(log scale), so the value is always a density over raw features and
/// comparable across models trained with different normalizations.
class Gmm {
 public:
  Gmm() = default;

  /// Throws DimensionError on inconsistent shapes and DataError on invariant
  /// violations (weights negative or not summing to 1 within 1e-9,
  /// non-positive or sub-floor variances).
  Gmm(std::vector<double> weights, Matrix means, Matrix variances, Normalization normalization = {},
      std::vector<double> variance_floor = {});

  std::size_t n_components() const noexcept { return weights_.size(); }
  std::size_t dim() const noexcept { return means_.cols(); }

  const std::vector<double>& weights() const noexcept { return weights_; }
  const Matrix& means() const noexcept { return means_; }
  const Matrix& variances() const noexcept { return variances_; }
  const Normalization& normalization() const noexcept { return normalization_; }
  const std::vector<double>& variance_floor() const noexcept { return variance_floor_; }

  /// log p(f | model), log-sum-exp with max subtraction. Throws DimensionError.
  double log_likelihood(std::span<const double> f) const;

  /// Same as log_likelihood without the dimension check; `scratch` must hold
  /// dim() + n_components() doubles.
  double log_likelihood_unchecked(std::span<const double> f, std::span<double> scratch) const noexcept;

  /// log(w_c) + log N(z; mean_c, var_c) for a point already in model space.
  void component_log_densities(std::span<const double> z, std::span<double> out) const noexcept;

  /// Maps a raw feature vector into model space.
  void normalize(std::span<const double> f, std::span<double> z) const noexcept;

  friend bool operator==(const Gmm& a, const Gmm& b) {
    return a.weights_ == b.weights_ && a.means_ == b.means_ && a.variances_ == b.variances_ &&
           a.normalization_ == b.normalization_ && a.variance_floor_ == b.variance_floor_;
  }

 private:
  std::vector<double> weights_;
  Matrix means_;
  Matrix variances_;
  Normalization normalization_;
  std::vector<double> variance_floor_;

  // Cached: log w_c - 0.5 (d log 2pi + sum log var_c), 1 / var, and -sum log scale.
  std::vector<double> log_const_;
  Matrix inv_var_;
  double log_jacobian_ = 0.0;
};

struct EmConfig {
  std::size_t n_components = 8;
  std::size_t max_iters = 100;
  /// Stop when (ll_t - ll_{t-1}) / |ll_{t-1}| falls below this.
  double tol = 1e-5;
  std::uint64_t seed = 0;
  double variance_floor_factor = 1e-3;
  /// z-score the training data and store the map inside the model.
  bool normalize = true;

  friend bool operator==(const EmConfig&, const EmConfig&) = default;
};

struct FitTrace {
  /// Training-set log-likelihood evaluated at the start of each iteration.
  std::vector<double> log_likelihood;
  bool converged = false;
  /// Components re-seeded after collapsing to zero responsibility, by iteration.
  std::vector<std::size_t> reseed_iterations;
};

/// k-means++ seeding (distinct rows, D^2-weighted) refined by at most 20
/// Lloyd iterations. Deterministic in `seed`. Throws InsufficientDataError
/// when data has fewer than k rows.
Matrix kmeans_init(const Matrix& data, std::size_t k, std::uint64_t seed);

/// Maximum-likelihood fit by EM from kmeans_init. A component whose total
/// responsibility underflows is re-seeded at the training point with the
/// lowest likelihood. Throws InsufficientDataError if rows < n_components.
Gmm fit_gmm(const Matrix& data, const EmConfig& config, FitTrace* trace = nullptr);

/// Scores every row of `frames` under every model: out(r, m) = log p(row r | models[m]).
/// OpenMP over rows; bit-identical to score_frames_serial.
Matrix score_frames(std::span<const Gmm* const> models, const Matrix& frames);
Matrix score_frames_serial(std::span<const Gmm* const> models, const Matrix& frames);

/// One EM E-step in model space: fills resp (rows x k) with posteriors and
/// row_ll with per-row log-likelihoods; returns their sum (summed serially
/// in row order so the result does not depend on thread count).
double estep(const Gmm& model, const Matrix& z, Matrix& resp, std::vector<double>& row_ll);
double estep_serial(const Gmm& model, const Matrix& z, Matrix& resp, std::vector<double>& row_ll);

inline constexpr const char* kGmmSchema = "igsgenre.gmm/1";

nlohmann::json to_json(const Gmm& model);
/// Throws PersistenceError on schema mismatch or invariant violation.
Gmm gmm_from_json(const nlohmann::json& doc);

std::string serialize(const Gmm& model);
Gmm deserialize(const std::string& text);

}  // namespace igsgenre::gmm
