#pragma once

#include "ifl/core.hpp"

namespace ifl {

struct FisherState {
  Mat J;
  int k = 0;
};

/// J_{k+1} = Q^-1 + H^T R^-1 H - Q^-1 F (J + F^T Q^-1 F)^-1 F^T Q^-1.
/// Rank-deficient Q or R is regularised with 1e-8 I before inversion.
Mat rcrlb_step(const Mat& J, const Mat& F, const Mat& H, const Mat& Q, const Mat& R);

/// Same recursion on the inverse chain: transition Jacobian F_tilde, observation Jacobian G,
/// process noise Q_bar = K R K^T and action noise Sigma_eps.
Mat rcrlb_inverse_step(const Mat& J, const Mat& F_tilde, const Mat& G, const Mat& Q_bar, const Mat& Sigma_eps);

FisherState rcrlb_advance(const FisherState& s, const Mat& F, const Mat& H, const Mat& Q, const Mat& R);

/// Bound on the error covariance, J^-1.
Mat rcrlb_bound(const Mat& J);

}  // namespace ifl
