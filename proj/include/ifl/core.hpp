#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ifl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Raised when a factorization or evaluation produces unusable numbers.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seeded pseudo-random stream. Same seed, same draws.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  static constexpr std::string_view algorithm() { return "mt19937_64"; }

  double standard_normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  /// Independent child stream, e.g. one per Monte-Carlo run.
  RngStream split(std::uint64_t stream) const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::uint64_t words[2];
    std::uint32_t raw[4];
    seq.generate(raw, raw + 4);
    words[0] = (static_cast<std::uint64_t>(raw[0]) << 32) | raw[1];
    words[1] = (static_cast<std::uint64_t>(raw[2]) << 32) | raw[3];
    return RngStream(words[0] ^ (words[1] << 1));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Symmetric part of `m`, shifted by max(jitter, -lambda_min) * I when indefinite.
template <typename Derived>
MatX<typename Derived::Scalar> symmetrize_psd(const Eigen::MatrixBase<Derived>& m,
                                              typename Derived::Scalar jitter) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) throw std::invalid_argument("symmetrize_psd: matrix is not square");
  if (!m.allFinite()) throw NumericalError("symmetrize_psd: non-finite entry");
  MatX<Scalar> sym = (m + m.transpose()) / Scalar(2);
  if (sym.size() == 0) return sym;
  if (Eigen::LLT<MatX<Scalar>>(sym).info() == Eigen::Success) return sym;
  Eigen::SelfAdjointEigenSolver<MatX<Scalar>> es(sym, Eigen::EigenvaluesOnly);
  const Scalar lo = es.eigenvalues().minCoeff();
  const Scalar scale = es.eigenvalues().cwiseAbs().maxCoeff();
  if (lo < -Scalar(1e-12) * scale) {
    sym.diagonal().array() += std::max(jitter, -lo);
  }
  return sym;
}

/// Per-step covariance hygiene: symmetrize, shift by 1e-12 * trace / n if indefinite.
template <typename Derived>
MatX<typename Derived::Scalar> covariance_hygiene(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Scalar tr = m.rows() > 0 ? m.trace() / Scalar(m.rows()) : Scalar(0);
  return symmetrize_psd(m, Scalar(1e-12) * std::max(tr, Scalar(0)));
}

/// Ratio of extreme singular values; infinity for exactly singular input.
template <typename Derived>
typename Derived::Scalar condition_number(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::JacobiSVD<MatX<Scalar>> svd(m.eval());
  const auto& s = svd.singularValues();
  if (s.size() == 0) return Scalar(1);
  const Scalar lo = s(s.size() - 1);
  return lo > Scalar(0) ? s(0) / lo : std::numeric_limits<Scalar>::infinity();
}

/// log N(x; mean, cov) via Cholesky. Throws on non-positive-definite covariance.
template <typename DX, typename DM, typename DC>
typename DX::Scalar gaussian_logpdf(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DM>& mean,
                                    const Eigen::MatrixBase<DC>& cov) {
  using Scalar = typename DX::Scalar;
  if (x.size() != mean.size() || cov.rows() != x.size() || cov.cols() != x.size())
    throw std::invalid_argument("gaussian_logpdf: dimension mismatch");
  Eigen::LLT<MatX<Scalar>> llt(cov.eval());
  if (llt.info() != Eigen::Success)
    throw NumericalError("gaussian_logpdf: covariance is singular or indefinite (condition " +
                         std::to_string(static_cast<double>(condition_number(cov))) + ")");
  const VecX<Scalar> z = llt.matrixL().solve((x - mean).eval());
  const Scalar logdet = Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
  const Scalar two_pi = Scalar(2) * Scalar(3.14159265358979323846);
  return Scalar(-0.5) * (z.squaredNorm() + logdet + Scalar(x.size()) * std::log(two_pi));
}

/// Lower factor L with L L^T = cov; handles semi-definite input through an eigen-decomposition.
template <typename Derived>
MatX<typename Derived::Scalar> noise_factor(const Eigen::MatrixBase<Derived>& cov) {
  using Scalar = typename Derived::Scalar;
  if (cov.rows() != cov.cols()) throw std::invalid_argument("noise_factor: matrix is not square");
  if (!cov.allFinite()) throw NumericalError("noise_factor: non-finite covariance");
  MatX<Scalar> sym = (cov + cov.transpose()) / Scalar(2);
  Eigen::LLT<MatX<Scalar>> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<MatX<Scalar>> es(sym);
  const auto& ev = es.eigenvalues();
  const Scalar scale = ev.size() ? ev.cwiseAbs().maxCoeff() : Scalar(0);
  if (ev.size() && ev.minCoeff() < -Scalar(1e-10) * scale)
    throw NumericalError("noise_factor: covariance is indefinite");
  return es.eigenvectors() * ev.cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal();
}

/// One draw from N(mean, L L^T) given a precomputed factor.
inline Vec sample_with_factor(RngStream& rng, const Vec& mean, const Mat& factor) {
  Vec u(factor.cols());
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.standard_normal();
  return mean + factor * u;
}

/// One draw from N(mean, cov). Zero covariance returns the mean exactly.
inline Vec sample_gaussian(RngStream& rng, const Vec& mean, const Mat& cov) {
  if (cov.rows() != mean.size()) throw std::invalid_argument("sample_gaussian: dimension mismatch");
  return sample_with_factor(rng, mean, noise_factor(cov));
}

/// cross * S^{-1} through a Cholesky solve of the symmetric S.
inline Mat gain_solve(const Mat& cross, const Mat& S) {
  Eigen::LLT<Mat> llt(S);
  if (llt.info() == Eigen::Success) return llt.solve(cross.transpose()).transpose();
  if (S.isZero(0.0) && cross.isZero(0.0)) return Mat::Zero(cross.rows(), cross.cols());
  const double tr = S.trace() / static_cast<double>(std::max<Eigen::Index>(S.rows(), 1));
  if (tr > 0.0) {
    Mat shifted = S;
    shifted.diagonal().array() += 1e-12 * tr;
    Eigen::LLT<Mat> retry(shifted);
    if (retry.info() == Eigen::Success) return retry.solve(cross.transpose()).transpose();
  }
  throw NumericalError("innovation covariance is singular (condition " +
                       std::to_string(condition_number(S)) + ")");
}

/// Inverse of a symmetric positive-definite matrix; adds `reg` * I when the factorization fails.
inline Mat spd_inverse(const Mat& m, double reg = 1e-8) {
  const Mat I = Mat::Identity(m.rows(), m.cols());
  Eigen::LLT<Mat> llt(m);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-12) return llt.solve(I);
  Eigen::LLT<Mat> retry(m + reg * I);
  if (retry.info() != Eigen::Success)
    throw NumericalError("matrix is not positive definite (condition " +
                         std::to_string(condition_number(m)) + ")");
  return retry.solve(I);
}

}  // namespace ifl
