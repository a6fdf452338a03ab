#include "ifl/crlb.hpp"

namespace ifl {

Mat rcrlb_step(const Mat& J, const Mat& F, const Mat& H, const Mat& Q, const Mat& R) {
  const Eigen::Index n = J.rows();
  if (J.cols() != n || F.rows() != n || F.cols() != n || Q.rows() != n || H.cols() != n || R.rows() != H.rows())
    throw std::invalid_argument("rcrlb_step: dimension mismatch");
  const Mat Qi = spd_inverse(Q);
  const Mat Ri = spd_inverse(R);
  const Mat QiF = Qi * F;
  const Mat inner = J + F.transpose() * QiF;
  const Mat Jn = Qi + H.transpose() * Ri * H - QiF * inner.ldlt().solve(QiF.transpose());
  if (!Jn.allFinite()) throw NumericalError("information recursion produced non-finite values");
  return 0.5 * (Jn + Jn.transpose());
}

Mat rcrlb_inverse_step(const Mat& J, const Mat& F_tilde, const Mat& G, const Mat& Q_bar, const Mat& Sigma_eps) {
  return rcrlb_step(J, F_tilde, G, Q_bar, Sigma_eps);
}

FisherState rcrlb_advance(const FisherState& s, const Mat& F, const Mat& H, const Mat& Q, const Mat& R) {
  return {rcrlb_step(s.J, F, H, Q, R), s.k + 1};
}

Mat rcrlb_bound(const Mat& J) { return spd_inverse(J, 0.0); }

}  // namespace ifl
