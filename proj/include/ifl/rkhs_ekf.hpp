#pragma once

#include "ifl/models.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ifl {

enum class DictionaryPolicy { sliding_window, ald };

/// Gaussian kernel exp(-|x - x'|^2 / sigma2) plus dictionary admission rule.
struct KernelSpec {
  double sigma2 = 1.0;
  DictionaryPolicy policy = DictionaryPolicy::sliding_window;
  int window = 2;
  double ald_threshold = 0.1;

  void validate() const;
};

struct Dictionary {
  std::vector<Vec> atoms;
  int size() const { return static_cast<int>(atoms.size()); }
};

double kernel(const KernelSpec& spec, const Vec& a, const Vec& b);

/// Phi(x) = [k(x, d_1) ... k(x, d_L)]^T
Vec kernel_features(const KernelSpec& spec, const Dictionary& dict, const Vec& x);

/// L x n Jacobian of Phi.
Mat kernel_features_jacobian(const KernelSpec& spec, const Dictionary& dict, const Vec& x);

struct DictionaryUpdate {
  bool admitted = false;
  int evicted = -1;
};

/// Admits `x` per the policy. The sliding window drops the oldest atom beyond its width.
DictionaryUpdate dictionary_update(Dictionary& dict, const KernelSpec& spec, const Vec& x);

/// How E[y Phi^T] and E[y y^T] enter the observation M-step.
enum class ObservationMoments {
  observed,            ///< y Phi(xhat)^T and y y^T from the actual observation
  model_substitution,  ///< B_{k-1} E[Phi Phi^T] and B_{k-1} E[Phi Phi^T] B_{k-1}^T + R_{k-1}
};

struct RkhsOptions {
  ObservationMoments moments = ObservationMoments::observed;
  /// Tikhonov term added to both kernel moment sums before each solve; 0 keeps the plain M-step.
  double ridge = 0.0;
  /// When set, the observation map is known: B and R are not learned.
  std::optional<DifferentiableMap> known_h;
  Mat known_R;
};

/// Augmented state z = [x_k; x_{k-1}] with the learned kernel expansion.
struct RkhsState {
  int n = 0;
  int p = 0;
  Vec z;
  Mat Sigma;
  Dictionary dict;
  Mat A;  ///< n x L
  Mat B;  ///< p x L
  Mat Q;
  Mat R;
  Mat S_xphi;   ///< running sum of E[x_k Phi(x_{k-1})^T]
  Mat S_phi1;   ///< running sum of E[Phi(x_{k-1}) Phi(x_{k-1})^T]
  Mat S_yphi;   ///< running sum of E[y_k Phi(x_k)^T]
  Mat S_phi;    ///< running sum of E[Phi(x_k) Phi(x_k)^T]
  int k = 0;
};

/// z = [x0; x0], Sigma = blockdiag(Sigma0, Sigma0) (or Sigma0 if already 2n x 2n),
/// one atom at x0, A and B all ones, sums zero.
RkhsState rkhs_init(const Vec& x0, const Mat& Sigma0, int p, const Mat& Q0, const Mat& R0);

/// EKF prediction and update on z, then E-step, M-step and dictionary update.
RkhsState rkhs_step(const RkhsState& state, const KernelSpec& spec, const Vec& y, const RkhsOptions& opts = {});

/// Current estimate of x_k.
Vec rkhs_estimate(const RkhsState& state);

/// The inverse filter is the same recursion driven by actions a_k.
RkhsState rkhs_inverse_wrap(const RkhsState& state, const KernelSpec& spec, const Vec& a,
                            const RkhsOptions& opts = {});

/// JSON snapshot. Field order: n, p, k, z, Sigma, atoms, A, B, Q, R, S_xphi, S_phi1, S_yphi, S_phi.
/// Matrices are row-major arrays of rows.
std::string rkhs_snapshot(const RkhsState& state);
RkhsState rkhs_restore(const std::string& snapshot);

}  // namespace ifl
