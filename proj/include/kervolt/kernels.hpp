#pragma once

#include <Eigen/Dense>
#include <string>

namespace kervolt {

enum class KernelKind { Linear, Polynomial, Gaussian };

struct KernelSpec {
  KernelKind kind = KernelKind::Linear;
  int beta = 2;        // polynomial degree
  double gamma = 1.0;  // polynomial offset / Gaussian width

  void validate() const;
};

std::string kernel_name(const KernelSpec& spec);

// Linear:     z'w
// Polynomial: (z'w + gamma)^beta
// Gaussian:   exp(-||z - w||^2 / gamma)
double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& w);

// T x T Gram matrix over feature rows, plus jitter on the diagonal.
Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                            double jitter);

// [K(z, row_t)]_t for a fresh input z.
Eigen::VectorXd kernel_vector(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                              const Eigen::VectorXd& z);

// a' K a with a jitter-free Gram matrix.
double rkhs_norm_sq(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                    const Eigen::VectorXd& a);

// Median of pairwise squared distances between rows; Gaussian widths are
// expressed in multiples of this scale during cross-validation.
double median_pairwise_sq_dist(const Eigen::MatrixXd& rows);

}  // namespace kervolt
