#pragma once

#include "ifl/models.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ifl {

/// Uniform bounds along a second-order EKF trajectory.
///
/// |F| <= f_bar, |H| <= h_bar, |F^{-1}| <= f_inv, sigma_lo I <= Sigma <= sigma_hi I,
/// Q >= q_lo I, R >= r_lo I, Q, R <= delta I, a_lo I <= Hess f_i <= a_hi I,
/// b_lo I <= Hess h_i <= b_hi I. The kappa / eps pairs bound the first-order
/// remainders |phi| <= kappa_phi |e|^2 for |e| <= eps_phi (same for chi).
struct SoekfBounds {
  double f_bar = 0, h_bar = 0, f_inv = 0;
  double sigma_lo = 0, sigma_hi = 0;
  double q_lo = 0, r_lo = 0, delta = 0;
  double a_lo = 0, a_hi = 0, b_lo = 0, b_hi = 0;
  double kappa_phi = 0, eps_phi = 0, kappa_chi = 0, eps_chi = 0;
  int n = 0, p = 0;
};

/// Extra bounds for the inverse filter. Bounds on the inverse transition inverse
/// and on the inverse process noise cannot be derived from the forward ones and
/// are supplied by the user.
struct InverseBoundsExt {
  double g_bar = 0;
  double m_lo = 0, m_hi = 0;    ///< inverse covariance bounds
  double eps_lo = 0;            ///< Sigma_eps >= eps_lo I
  double delta_bar = 0;         ///< inverse noise upper bound
  double c_lo = 0, c_hi = 0;    ///< Hessian bounds of g
  double kappa_chibar = 0, eps_chibar = 0;
  double f_inv_inverse = 0;     ///< |Fbar^{-1}| bound
  double q_lo_inverse = 0;      ///< K R K^T lower bound
  int na = 0;
};

struct Lemma2Constants {
  double f_cap = 0;  ///< a_hi^2 sigma_hi^2 n^2
  double h_cap = 0;  ///< b_hi^2 sigma_hi^2 n p
  double beta = 0;   ///< 0.5 a_hi b_hi sigma_hi^2 n sqrt(n p)
};

Lemma2Constants lemma2_constants(const SoekfBounds& b);

struct StabilityReport {
  std::vector<std::string> violated_preconditions;
  double beta = 0;
  double eq20_bound = 0;  ///< f_inv must be below this (infinite when curvature vanishes)
  bool eq20 = false;
  double c = 0;
  bool eq21 = false;
  std::optional<double> alpha;
  double kappa_prime = 0, eps_prime = 0;
  double kappa_nonl = 0, kappa_noise = 0;
  double kappa_q = 0, c_q = 0, kappa_sec = 0, c_sec = 0;
  std::optional<double> epsilon;        ///< admissible initial error radius
  std::optional<double> epsilon_tilde;  ///< radius implied by delta
  bool eq22 = false;
  bool stable = false;  ///< every condition holds

  /// Inverse-only: forward check failed first.
  bool forward_precondition_unmet = false;
  double d_lo = 0, d_hi = 0;

  std::string text() const;
  /// One line of key=value pairs.
  std::string record() const;
};

StabilityReport check_theorem1(const SoekfBounds& b);

/// Forward check first; on success, the same check with the inverse substitutions.
StabilityReport check_theorem2(const SoekfBounds& b, const InverseBoundsExt& ext);

/// Inverse-dynamics bound set used by check_theorem2.
SoekfBounds inverse_bounds(const SoekfBounds& b, const InverseBoundsExt& ext);

struct FilterTrace {
  std::vector<Vec> estimates;
  std::vector<Mat> covariances;
};

/// Empirical bounds with 5% inflation: sup-type constants times 1.05, inf-type divided by 1.05.
/// Remainder constants are not estimated and stay zero.
SoekfBounds estimate_bounds_from_runs(const SystemModel& model, const std::vector<FilterTrace>& traces);

/// Bounds file: key = value lines, names as in SoekfBounds / InverseBoundsExt.
SoekfBounds parse_bounds(const std::string& text, InverseBoundsExt* ext = nullptr, bool* has_ext = nullptr);

}  // namespace ifl
