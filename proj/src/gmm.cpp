#include "igsgenre/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "igsgenre/error.hpp"
#include "igsgenre/rng.hpp"

namespace igsgenre::gmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)
constexpr std::size_t kMaxLloydIters = 20;
constexpr double kCollapsedMass = 1e-8;

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest(const Matrix& centres, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centres.rows(); ++c) {
    const double d = sq_dist(centres.row(c), x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

/// Population mean and variance per column.
void column_moments(const Matrix& data, std::vector<double>& mean, std::vector<double>& var) {
  const std::size_t n = data.rows(), d = data.cols();
  mean.assign(d, 0.0);
  var.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) mean[j] += data(r, j);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const double x = data(r, j) - mean[j];
      var[j] += x * x;
    }
  for (double& v : var) v /= static_cast<double>(n);
}

}  // namespace

Gmm::Gmm(std::vector<double> weights, Matrix means, Matrix variances, Normalization normalization,
         std::vector<double> variance_floor)
    : weights_(std::move(weights)),
      means_(std::move(means)),
      variances_(std::move(variances)),
      normalization_(std::move(normalization)),
      variance_floor_(std::move(variance_floor)) {
  const std::size_t k = weights_.size(), d = means_.cols();
  if (k == 0 || d == 0) throw DimensionError("mixture needs at least one component and one dimension");
  if (means_.rows() != k || variances_.rows() != k || variances_.cols() != d)
    throw DimensionError("mixture parameter shapes disagree");
  if (!normalization_.identity() && (normalization_.shift.size() != d || normalization_.scale.size() != d))
    throw DimensionError("normalization vectors must have the model dimension");
  if (!variance_floor_.empty() && variance_floor_.size() != d)
    throw DimensionError("variance floor must have the model dimension");

  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("mixture weights must be finite and non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("mixture weights sum to " + std::to_string(total) + ", not 1");
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) {
      const double v = variances_(c, j);
      if (!(v > 0.0) || !std::isfinite(v)) throw DataError("variances must be finite and positive");
      if (!variance_floor_.empty() && v < variance_floor_[j]) throw DataError("variance below the stored floor");
      if (!std::isfinite(means_(c, j))) throw DataError("means must be finite");
    }
  for (double s : normalization_.scale)
    if (!(s > 0.0) || !std::isfinite(s)) throw DataError("normalization scales must be finite and positive");

  log_const_.resize(k);
  inv_var_ = Matrix(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    double log_det = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      log_det += std::log(variances_(c, j));
      inv_var_(c, j) = 1.0 / variances_(c, j);
    }
    log_const_[c] = std::log(weights_[c]) - 0.5 * (static_cast<double>(d) * kLog2Pi + log_det);
  }
  log_jacobian_ = 0.0;
  for (double s : normalization_.scale) log_jacobian_ -= std::log(s);
}

void Gmm::normalize(std::span<const double> f, std::span<double> z) const noexcept {
  if (normalization_.identity()) {
    std::copy(f.begin(), f.end(), z.begin());
    return;
  }
  for (std::size_t j = 0; j < f.size(); ++j) z[j] = (f[j] - normalization_.shift[j]) / normalization_.scale[j];
}

void Gmm::component_log_densities(std::span<const double> z, std::span<double> out) const noexcept {
  const std::size_t d = dim();
  for (std::size_t c = 0; c < n_components(); ++c) {
    const double* mu = means_.row(c).data();
    const double* iv = inv_var_.row(c).data();
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = z[j] - mu[j];
      q += x * x * iv[j];
    }
    out[c] = log_const_[c] - 0.5 * q;
  }
}

double Gmm::log_likelihood_unchecked(std::span<const double> f, std::span<double> scratch) const noexcept {
  auto z = scratch.first(dim());
  auto comp = scratch.subspan(dim(), n_components());
  normalize(f, z);
  component_log_densities(z, comp);
  const double m = *std::max_element(comp.begin(), comp.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double l : comp) s += std::exp(l - m);
  return m + std::log(s) + log_jacobian_;
}

double Gmm::log_likelihood(std::span<const double> f) const {
  if (f.size() != dim())
    throw DimensionError("feature vector has " + std::to_string(f.size()) + " entries, model expects " +
                         std::to_string(dim()));
  std::vector<double> scratch(dim() + n_components());
  return log_likelihood_unchecked(f, scratch);
}

Matrix kmeans_init(const Matrix& data, std::size_t k, std::uint64_t seed) {
  const std::size_t n = data.rows();
  if (k == 0) throw ConfigError("k-means needs k >= 1");
  if (n < k)
    throw InsufficientDataError("k-means needs at least " + std::to_string(k) + " rows, got " + std::to_string(n));

  Rng rng(seed);
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(n, false);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t idx) {
    chosen.push_back(idx);
    taken[idx] = true;
    for (std::size_t r = 0; r < n; ++r) d2[r] = std::min(d2[r], sq_dist(data.row(r), data.row(idx)));
  };

  take(static_cast<std::size_t>(rng.index(n)));
  while (chosen.size() < k) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      if (!taken[r]) total += d2[r];
    std::size_t pick = n;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        if (taken[r] || d2[r] <= 0.0) continue;
        acc += d2[r];
        pick = r;
        if (acc > u) break;
      }
    }
    if (pick == n) {
      // Every remaining row duplicates a chosen one.
      pick = static_cast<std::size_t>(std::find(taken.begin(), taken.end(), false) - taken.begin());
    }
    take(pick);
  }

  Matrix centres(k, data.cols());
  for (std::size_t c = 0; c < k; ++c) std::copy_n(data.row(chosen[c]).begin(), data.cols(), centres.row(c).begin());

  std::vector<std::size_t> assign(n, k);
  for (std::size_t it = 0; it < kMaxLloydIters; ++it) {
    bool changed = false;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t c = nearest(centres, data.row(r));
      if (c != assign[r]) {
        assign[r] = c;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums(k, data.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r = 0; r < n; ++r) {
      ++counts[assign[r]];
      auto row = data.row(r);
      auto s = sums.row(assign[r]);
      for (std::size_t j = 0; j < data.cols(); ++j) s[j] += row[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centre
      for (std::size_t j = 0; j < data.cols(); ++j) centres(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }
  }
  return centres;
}

Gmm fit_gmm(const Matrix& data, const EmConfig& config, FitTrace* trace) {
  const std::size_t n = data.rows(), d = data.cols(), k = config.n_components;
  if (k == 0 || config.max_iters == 0 || !(config.tol > 0.0) || !(config.variance_floor_factor > 0.0))
    throw ConfigError("EM configuration values must be positive");
  if (n < k || n == 0)
    throw InsufficientDataError("GMM fit needs at least " + std::to_string(std::max<std::size_t>(k, 1)) +
                                " rows, got " + std::to_string(n));

  std::vector<double> mean, var;
  column_moments(data, mean, var);

  Normalization norm;
  Matrix z = data;
  if (config.normalize) {
    norm.shift = mean;
    norm.scale.resize(d);
    for (std::size_t j = 0; j < d; ++j) norm.scale[j] = var[j] > 0.0 ? std::sqrt(var[j]) : 1.0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) z(r, j) = (data(r, j) - norm.shift[j]) / norm.scale[j];
    column_moments(z, mean, var);
  }
  std::vector<double> floor(d), global_var(d);
  for (std::size_t j = 0; j < d; ++j) {
    global_var[j] = var[j] > 0.0 ? var[j] : 1.0;
    floor[j] = config.variance_floor_factor * global_var[j];
  }

  // Initial parameters from hard k-means assignments.
  Matrix means = kmeans_init(z, k, config.seed);
  Matrix vars(k, d);
  std::vector<double> weights(k, 0.0);
  {
    std::vector<std::size_t> counts(k, 0);
    Matrix sq(k, d);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t c = nearest(means, z.row(r));
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) {
        const double x = z(r, j) - means(c, j);
        sq(c, j) += x * x;
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      weights[c] = static_cast<double>(std::max<std::size_t>(counts[c], 1));
      for (std::size_t j = 0; j < d; ++j) {
        const double v = counts[c] > 1 ? sq(c, j) / static_cast<double>(counts[c]) : global_var[j];
        vars(c, j) = std::max(v, floor[j]);
      }
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& w : weights) w /= total;
  }

  Gmm model(weights, means, vars, {}, floor);
  Matrix resp(n, k);
  std::vector<double> row_ll(n);
  std::vector<double> mass(k);
  FitTrace local;
  FitTrace& tr = trace ? *trace : local;
  tr = FitTrace{};

  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    const double ll = estep(model, z, resp, row_ll);
    tr.log_likelihood.push_back(ll);
    if (iter > 0) {
      const double prev = tr.log_likelihood[iter - 1];
      if ((ll - prev) / std::abs(prev) < config.tol) {
        tr.converged = true;
        break;
      }
    }

    // M-step; each component reduces over rows in order, so results do not
    // depend on how components are spread over threads.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(k); ++ci) {
      const auto c = static_cast<std::size_t>(ci);
      double nk = 0.0;
      for (std::size_t r = 0; r < n; ++r) nk += resp(r, c);
      mass[c] = nk;
      if (nk < kCollapsedMass) continue;
      auto mu = means.row(c);
      std::fill(mu.begin(), mu.end(), 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        const double w = resp(r, c);
        auto x = z.row(r);
        for (std::size_t j = 0; j < d; ++j) mu[j] += w * x[j];
      }
      for (double& m : mu) m /= nk;
      auto v = vars.row(c);
      std::fill(v.begin(), v.end(), 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        const double w = resp(r, c);
        auto x = z.row(r);
        for (std::size_t j = 0; j < d; ++j) {
          const double e = x[j] - mu[j];
          v[j] += w * e * e;
        }
      }
      for (std::size_t j = 0; j < d; ++j) v[j] = std::max(v[j] / nk, floor[j]);
      weights[c] = nk / static_cast<double>(n);
    }

    std::vector<std::size_t> order;
    for (std::size_t c = 0; c < k; ++c) {
      if (mass[c] >= kCollapsedMass) continue;
      if (order.empty()) {
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row_ll[a] < row_ll[b]; });
      }
      const std::size_t row = order[tr.reseed_iterations.size() % n];
      std::copy_n(z.row(row).begin(), d, means.row(c).begin());
      for (std::size_t j = 0; j < d; ++j) vars(c, j) = std::max(global_var[j], floor[j]);
      weights[c] = 1.0 / static_cast<double>(n);
      tr.reseed_iterations.push_back(iter);
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& w : weights) w /= total;
    model = Gmm(weights, means, vars, {}, floor);
  }

  return Gmm(model.weights(), model.means(), model.variances(), std::move(norm), floor);
}

nlohmann::json to_json(const Gmm& model) {
  nlohmann::json doc;
  doc["schema_version"] = kGmmSchema;
  doc["dim"] = model.dim();
  doc["n_components"] = model.n_components();
  const auto& norm = model.normalization();
  doc["normalization"] = {{"shift", norm.identity() ? std::vector<double>(model.dim(), 0.0) : norm.shift},
                          {"scale", norm.identity() ? std::vector<double>(model.dim(), 1.0) : norm.scale},
                          {"enabled", !norm.identity()}};
  doc["variance_floor"] = model.variance_floor();
  doc["weights"] = model.weights();
  auto rows = [](const Matrix& m) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) out.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return out;
  };
  doc["means"] = rows(model.means());
  doc["variances"] = rows(model.variances());
  return doc;
}

Gmm gmm_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object() || !doc.contains("schema_version"))
      throw PersistenceError("model document lacks schema_version");
    const auto version = doc.at("schema_version").get<std::string>();
    if (version != kGmmSchema)
      throw PersistenceError("model document version '" + version + "' is not supported (expected '" +
                             std::string(kGmmSchema) + "')");
    const auto d = doc.at("dim").get<std::size_t>();
    const auto k = doc.at("n_components").get<std::size_t>();
    auto read_rows = [&](const nlohmann::json& j, const char* what) {
      if (!j.is_array() || j.size() != k) throw PersistenceError(std::string(what) + " must have n_components rows");
      Matrix m(0, 0);
      for (const auto& row : j) {
        const auto v = row.get<std::vector<double>>();
        if (v.size() != d) throw PersistenceError(std::string(what) + " rows must have dim entries");
        m.append_row(v);
      }
      return m;
    };
    Normalization norm;
    const auto& jn = doc.at("normalization");
    if (jn.at("enabled").get<bool>()) {
      norm.shift = jn.at("shift").get<std::vector<double>>();
      norm.scale = jn.at("scale").get<std::vector<double>>();
    }
    auto weights = doc.at("weights").get<std::vector<double>>();
    if (weights.size() != k) throw PersistenceError("weights must have n_components entries");
    return Gmm(std::move(weights), read_rows(doc.at("means"), "means"), read_rows(doc.at("variances"), "variances"),
               std::move(norm), doc.at("variance_floor").get<std::vector<double>>());
  } catch (const PersistenceError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw PersistenceError(std::string("malformed model document: ") + e.what());
  } catch (const Error& e) {
    throw PersistenceError(std::string("invalid model document: ") + e.what());
  }
}

std::string serialize(const Gmm& model) { return to_json(model).dump(1); }

Gmm deserialize(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw PersistenceError(std::string("model document is not valid JSON: ") + e.what());
  }
  return gmm_from_json(doc);
}

}  // namespace igsgenre::gmm
