// Data-parallel GMM kernels. Each parallel loop writes disjoint outputs and
// any reduction happens afterwards in row order, so the OpenMP and serial
// versions produce bit-identical results for any thread count.

#include <algorithm>
#include <cmath>
#include <string>

#include "igsgenre/error.hpp"
#include "igsgenre/gmm.hpp"

namespace igsgenre::gmm {

namespace {

std::size_t scratch_size(std::span<const Gmm* const> models) {
  std::size_t s = 0;
  for (const Gmm* m : models) s = std::max(s, m->dim() + m->n_components());
  return s;
}

void check_dims(std::span<const Gmm* const> models, const Matrix& frames) {
  for (const Gmm* m : models)
    if (m->dim() != frames.cols())
      throw DimensionError("frames have " + std::to_string(frames.cols()) + " columns, model expects " +
                           std::to_string(m->dim()));
}

void score_row(std::span<const Gmm* const> models, std::span<const double> f, std::span<double> scratch,
               std::span<double> out) {
  for (std::size_t m = 0; m < models.size(); ++m) out[m] = models[m]->log_likelihood_unchecked(f, scratch);
}

void estep_row(const Gmm& model, std::span<const double> z, std::span<double> resp, double& ll) {
  model.component_log_densities(z, resp);
  const double mx = *std::max_element(resp.begin(), resp.end());
  double s = 0.0;
  for (double l : resp) s += std::exp(l - mx);
  ll = mx + std::log(s);
  for (double& r : resp) r = std::exp(r - ll);
}

double ordered_sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

Matrix score_frames(std::span<const Gmm* const> models, const Matrix& frames) {
  check_dims(models, frames);
  Matrix out(frames.rows(), models.size());
  const std::size_t scratch_len = scratch_size(models);
  const auto n = static_cast<std::ptrdiff_t>(frames.rows());
#pragma omp parallel
  {
    std::vector<double> scratch(scratch_len);
#pragma omp for schedule(static)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
      const auto row = static_cast<std::size_t>(r);
      score_row(models, frames.row(row), scratch, out.row(row));
    }
  }
  return out;
}

Matrix score_frames_serial(std::span<const Gmm* const> models, const Matrix& frames) {
  check_dims(models, frames);
  Matrix out(frames.rows(), models.size());
  std::vector<double> scratch(scratch_size(models));
  for (std::size_t r = 0; r < frames.rows(); ++r) score_row(models, frames.row(r), scratch, out.row(r));
  return out;
}

double estep(const Gmm& model, const Matrix& z, Matrix& resp, std::vector<double>& row_ll) {
  resp = Matrix(z.rows(), model.n_components());
  row_ll.assign(z.rows(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(z.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const auto row = static_cast<std::size_t>(r);
    estep_row(model, z.row(row), resp.row(row), row_ll[row]);
  }
  return ordered_sum(row_ll);
}

double estep_serial(const Gmm& model, const Matrix& z, Matrix& resp, std::vector<double>& row_ll) {
  resp = Matrix(z.rows(), model.n_components());
  row_ll.assign(z.rows(), 0.0);
  for (std::size_t r = 0; r < z.rows(); ++r) estep_row(model, z.row(r), resp.row(r), row_ll[r]);
  return ordered_sum(row_ll);
}

}  // namespace igsgenre::gmm
