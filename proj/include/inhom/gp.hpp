#pragma once

// Zero-mean Gaussian-process regression with a squared-exponential
// correlation kernel on standardized outputs.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inhom/error.hpp"

namespace inhom {

/// exp(-sum_m (x_m - x'_m)^2 / l_m); length scales are in squared input units.
struct SqeKernel {
  Eigen::VectorXd lengthscales;

  SqeKernel() = default;
  explicit SqeKernel(Eigen::VectorXd ls) : lengthscales(std::move(ls)) { validate(); }
  SqeKernel(std::initializer_list<double> ls) : lengthscales(static_cast<Eigen::Index>(ls.size())) {
    Eigen::Index i = 0;
    for (double v : ls) lengthscales(i++) = v;
    validate();
  }

  [[nodiscard]] Eigen::Index dim() const { return lengthscales.size(); }

  void validate() const {
    for (Eigen::Index m = 0; m < lengthscales.size(); ++m) {
      if (!(lengthscales(m) > 0.0) || !std::isfinite(lengthscales(m))) {
        throw DataError("length scale " + std::to_string(m + 1) + " must be positive and finite");
      }
    }
  }
};

template <class A, class B>
[[nodiscard]] double sqe_corr(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp, const SqeKernel& k) {
  if (x.size() != xp.size() || x.size() != k.dim()) throw DataError("dimension mismatch in kernel evaluation");
  double s = 0.0;
  for (Eigen::Index m = 0; m < x.size(); ++m) {
    const double a = x(m);
    const double b = xp(m);
    if (!std::isfinite(a) || !std::isfinite(b)) throw DataError("non-finite input in kernel evaluation");
    const double diff = a - b;
    s += diff * diff / k.lengthscales(m);
  }
  return std::exp(-s);
}

struct CorrMatrix {
  Eigen::MatrixXd entries;
  double jitter = 0.0;
};

/// Lower Cholesky factor of a correlation matrix with the jitter that made it PD.
struct CholeskyFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;

  [[nodiscard]] Eigen::Index size() const { return llt.matrixLLT().rows(); }

  [[nodiscard]] double log_det() const {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }
};

/// Rows of `x` are input points.
[[nodiscard]] inline Eigen::MatrixXd cross_corr(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const SqeKernel& k) {
  if (a.cols() != k.dim() || b.cols() != k.dim()) throw DataError("dimension mismatch in kernel evaluation");
  if (!a.allFinite() || !b.allFinite()) throw DataError("non-finite input in kernel evaluation");
  Eigen::MatrixXd out(a.rows(), b.rows());
  const Eigen::ArrayXd inv = k.lengthscales.array().inverse();
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out(i, j) = std::exp(-((a.row(i) - b.row(j)).array().square().transpose() * inv).sum());
    }
  }
  return out;
}

[[nodiscard]] inline CorrMatrix corr_matrix(const Eigen::MatrixXd& x, const SqeKernel& k, double jitter) {
  if (x.rows() < 1) throw DataError("corr_matrix needs at least one input");
  if (!(jitter >= 0.0)) throw DataError("jitter must be >= 0");
  CorrMatrix c;
  const Eigen::Index n = x.rows();
  c.entries.resize(n, n);
  const Eigen::ArrayXd inv = k.lengthscales.array().inverse();
  if (x.cols() != k.dim()) throw DataError("dimension mismatch in kernel evaluation");
  if (!x.allFinite()) throw DataError("non-finite input in kernel evaluation");
  for (Eigen::Index j = 0; j < n; ++j) {
    c.entries(j, j) = 1.0 + jitter;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = std::exp(-((x.row(i) - x.row(j)).array().square().transpose() * inv).sum());
      c.entries(i, j) = v;
      c.entries(j, i) = v;
    }
  }
  c.jitter = jitter;
  return c;
}

/// Plain Cholesky; throws when the matrix is not numerically PD.
[[nodiscard]] inline CholeskyFactor factorize(const CorrMatrix& c) {
  CholeskyFactor f;
  f.llt.compute(c.entries);
  if (f.llt.info() != Eigen::Success) throw NumericalError("matrix not PD");
  f.jitter = c.jitter;
  return f;
}

/// Jitter ladder: start, start*10, ... up to `max_jitter`.
struct JitterLadder {
  double start = 1e-8;
  double max_jitter = 1e-4;
};

/// Factorizes `base + jitter I`, escalating jitter along the ladder. `base`
/// must carry a unit diagonal and no jitter.
[[nodiscard]] inline CholeskyFactor factorize_with_ladder(const Eigen::MatrixXd& base, JitterLadder ladder = {}) {
  Eigen::MatrixXd a = base;
  for (double j = ladder.start; j <= ladder.max_jitter * (1.0 + 1e-9); j *= 10.0) {
    a.diagonal() = base.diagonal().array() + j;
    CholeskyFactor f;
    f.llt.compute(a);
    if (f.llt.info() == Eigen::Success && std::isfinite(f.log_det())) {
      f.jitter = j;
      return f;
    }
    if (j == 0.0) break;
  }
  throw NumericalError("matrix not PD");
}

[[nodiscard]] inline CholeskyFactor factorize_with_ladder(const Eigen::MatrixXd& x, const SqeKernel& k,
                                                          JitterLadder ladder = {}) {
  return factorize_with_ladder(corr_matrix(x, k, 0.0).entries, ladder);
}

/// Zero-mean multivariate normal log density:
/// -1/2 [N ln 2pi + ln|S| + y' S^{-1} y].
[[nodiscard]] inline double log_likelihood(const CholeskyFactor& chol, const Eigen::VectorXd& y) {
  if (y.size() != chol.size()) throw DataError("response length does not match the factorization");
  const Eigen::VectorXd z = chol.llt.matrixL().solve(y);
  const double n = static_cast<double>(y.size());
  const double ll = -0.5 * (n * std::log(2.0 * std::numbers::pi) + chol.log_det() + z.squaredNorm());
  if (!std::isfinite(ll)) throw NumericalError("log-likelihood is not finite");
  return ll;
}

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Undo of a scalar standardization: y = z * sd + mean.
struct OutputScale {
  double mean = 0.0;
  double sd = 1.0;
};

/// Conditioned zero-mean GP ready to predict at new inputs.
class GpPosterior {
 public:
  GpPosterior(Eigen::MatrixXd x_train, const Eigen::VectorXd& y_std, SqeKernel kernel, CholeskyFactor chol)
      : x_(std::move(x_train)), kernel_(std::move(kernel)), chol_(std::move(chol)) {
    if (y_std.size() != x_.rows() || chol_.size() != x_.rows()) throw DataError("training sizes disagree");
    alpha_ = chol_.llt.solve(y_std);
  }

  /// Factorizes with the given jitter and no escalation.
  static GpPosterior with_jitter(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_std, const SqeKernel& kernel,
                                 double jitter) {
    return GpPosterior(x_train, y_std, kernel, factorize(corr_matrix(x_train, kernel, jitter)));
  }

  /// Factorizes with the jitter ladder.
  static GpPosterior with_ladder(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_std, const SqeKernel& kernel,
                                 JitterLadder ladder = {}) {
    return GpPosterior(x_train, y_std, kernel, factorize_with_ladder(x_train, kernel, ladder));
  }

  /// Standardized-scale prediction: mean k'S^{-1}y, variance 1 + jitter - k'S^{-1}k.
  template <class Derived>
  [[nodiscard]] GpPrediction predict(const Eigen::MatrixBase<Derived>& x_test) const {
    if (x_test.size() != x_.cols()) throw DataError("test input has wrong dimension");
    Eigen::VectorXd kvec(x_.rows());
    const Eigen::RowVectorXd xt = x_test.derived().transpose();
    for (Eigen::Index i = 0; i < x_.rows(); ++i) kvec(i) = sqe_corr(x_.row(i).transpose(), xt.transpose(), kernel_);
    GpPrediction p;
    p.mean = kvec.dot(alpha_);
    const Eigen::VectorXd v = chol_.llt.matrixL().solve(kvec);
    double var = 1.0 + chol_.jitter - v.squaredNorm();
    if (var < -1e-10) throw NumericalError("negative predictive variance " + std::to_string(var));
    p.variance = std::max(var, 0.0);
    return p;
  }

  template <class Derived>
  [[nodiscard]] GpPrediction predict(const Eigen::MatrixBase<Derived>& x_test, OutputScale scale) const {
    GpPrediction p = predict(x_test);
    return {p.mean * scale.sd + scale.mean, p.variance * scale.sd * scale.sd};
  }

  [[nodiscard]] double log_likelihood(const Eigen::VectorXd& y_std) const { return inhom::log_likelihood(chol_, y_std); }
  [[nodiscard]] const CholeskyFactor& factor() const { return chol_; }
  [[nodiscard]] const SqeKernel& kernel() const { return kernel_; }

 private:
  Eigen::MatrixXd x_;
  SqeKernel kernel_;
  CholeskyFactor chol_;
  Eigen::VectorXd alpha_;
};

/// One-shot prediction at a single test input, standardized units unless a
/// scale is supplied.
[[nodiscard]] inline GpPrediction gp_predict(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_std,
                                             const SqeKernel& k, double jitter, const Eigen::VectorXd& x_test,
                                             std::optional<OutputScale> scale = std::nullopt) {
  const auto post = GpPosterior::with_jitter(x_train, y_std, k, jitter);
  return scale ? post.predict(x_test, *scale) : post.predict(x_test);
}

}  // namespace inhom
