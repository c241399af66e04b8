#include "kervolt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace kervolt {

void KernelSpec::validate() const {
  switch (kind) {
    case KernelKind::Linear:
      return;
    case KernelKind::Polynomial:
      if (beta < 1) throw std::invalid_argument("polynomial degree must be >= 1");
      if (gamma < 0.0) throw std::invalid_argument("polynomial offset must be >= 0");
      return;
    case KernelKind::Gaussian:
      if (gamma <= 0.0) throw std::invalid_argument("Gaussian width must be > 0");
      return;
  }
  throw std::logic_error("unreachable kernel kind");
}

std::string kernel_name(const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelKind::Linear:
      return "linear";
    case KernelKind::Polynomial:
      return "polynomial";
    case KernelKind::Gaussian:
      return "gaussian";
  }
  throw std::logic_error("unreachable kernel kind");
}

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& w) {
  if (z.size() != w.size())
    throw std::invalid_argument("kernel arguments have mismatched dimensions");
  spec.validate();
  switch (spec.kind) {
    case KernelKind::Linear:
      return z.dot(w);
    case KernelKind::Polynomial:
      return std::pow(z.dot(w) + spec.gamma, spec.beta);
    case KernelKind::Gaussian:
      return std::exp(-(z - w).squaredNorm() / spec.gamma);
  }
  throw std::logic_error("unreachable kernel kind");
}

Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                            double jitter) {
  if (jitter < 0.0) throw std::invalid_argument("jitter must be >= 0");
  const Eigen::Index t = rows.rows();
  Eigen::MatrixXd gram(t, t);
  for (Eigen::Index i = 0; i < t; ++i) {
    for (Eigen::Index j = i; j < t; ++j) {
      const double value = kernel_eval(spec, rows.row(i).transpose(),
                                       rows.row(j).transpose());
      gram(i, j) = value;
      gram(j, i) = value;
    }
    gram(i, i) += jitter;
  }
  return gram;
}

Eigen::VectorXd kernel_vector(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                              const Eigen::VectorXd& z) {
  Eigen::VectorXd k(rows.rows());
  for (Eigen::Index t = 0; t < rows.rows(); ++t)
    k[t] = kernel_eval(spec, z, rows.row(t).transpose());
  return k;
}

double rkhs_norm_sq(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                    const Eigen::VectorXd& a) {
  if (a.size() != rows.rows())
    throw std::invalid_argument("coefficient vector length must match row count");
  const Eigen::MatrixXd gram = gram_matrix(spec, rows, 0.0);
  return a.dot(gram * a);
}

double median_pairwise_sq_dist(const Eigen::MatrixXd& rows) {
  const Eigen::Index t = rows.rows();
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(t) * (t - 1) / 2);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = i + 1; j < t; ++j)
      dists.push_back((rows.row(i) - rows.row(j)).squaredNorm());
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t mid = dists.size() / 2;
  const double median = dists.size() % 2 == 1
                            ? dists[mid]
                            : 0.5 * (dists[mid - 1] + dists[mid]);
  // Coincident inputs give a zero median; fall back to a unit scale so a
  // Gaussian width derived from it stays valid.
  return median > 0.0 ? median : 1.0;
}

}  // namespace kervolt
