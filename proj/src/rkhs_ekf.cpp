#include "ifl/rkhs_ekf.hpp"

#include <json.hpp>

#include <cmath>

namespace ifl {

namespace {

// X (S + extra I)^{-1} for a symmetric PSD running sum; ridge when singular or badly conditioned.
Mat solve_sum(const Mat& X, const Mat& S0, double extra) {
  Mat S = S0;
  if (extra > 0.0) S.diagonal().array() += extra;
  Eigen::LLT<Mat> llt(S);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-8) return llt.solve(X.transpose()).transpose();
  const double tr = S.trace() / static_cast<double>(std::max<Eigen::Index>(S.rows(), 1));
  const double ridge = 1e-6 * (tr > 0.0 ? tr : 1.0);
  Mat reg = S;
  reg.diagonal().array() += ridge;
  Eigen::LDLT<Mat> ldlt(reg);
  if (ldlt.info() != Eigen::Success) throw NumericalError("kernel moment sum could not be factorised");
  return ldlt.solve(X.transpose()).transpose();
}

Mat drop_col(const Mat& m, int c) {
  Mat out(m.rows(), m.cols() - 1);
  out << m.leftCols(c), m.rightCols(m.cols() - c - 1);
  return out;
}

Mat drop_row_col(const Mat& m, int c) { return drop_col(drop_col(m, c).transpose(), c).transpose(); }

Mat append_col(const Mat& m, double value) {
  Mat out(m.rows(), m.cols() + 1);
  out << m, Vec::Constant(m.rows(), value);
  return out;
}

Mat append_zero_row_col(const Mat& m) {
  Mat out = Mat::Zero(m.rows() + 1, m.cols() + 1);
  out.topLeftCorner(m.rows(), m.cols()) = m;
  return out;
}

}  // namespace

void KernelSpec::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("kernel width must be positive");
  if (policy == DictionaryPolicy::sliding_window && window < 1)
    throw std::invalid_argument("sliding window must hold at least one atom");
  if (policy == DictionaryPolicy::ald && !(ald_threshold >= 0.0))
    throw std::invalid_argument("ALD threshold must be non-negative");
}

double kernel(const KernelSpec& spec, const Vec& a, const Vec& b) {
  return std::exp(-(a - b).squaredNorm() / spec.sigma2);
}

Vec kernel_features(const KernelSpec& spec, const Dictionary& dict, const Vec& x) {
  Vec phi(dict.size());
  for (int i = 0; i < dict.size(); ++i) phi(i) = kernel(spec, x, dict.atoms[i]);
  return phi;
}

Mat kernel_features_jacobian(const KernelSpec& spec, const Dictionary& dict, const Vec& x) {
  Mat J(dict.size(), x.size());
  for (int i = 0; i < dict.size(); ++i) {
    const Vec d = x - dict.atoms[i];
    J.row(i) = (-2.0 / spec.sigma2) * std::exp(-d.squaredNorm() / spec.sigma2) * d.transpose();
  }
  return J;
}

DictionaryUpdate dictionary_update(Dictionary& dict, const KernelSpec& spec, const Vec& x) {
  spec.validate();
  DictionaryUpdate u;
  if (spec.policy == DictionaryPolicy::sliding_window) {
    dict.atoms.push_back(x);
    u.admitted = true;
    if (dict.size() > spec.window) {
      dict.atoms.erase(dict.atoms.begin());
      u.evicted = 0;
    }
    return u;
  }
  const int L = dict.size();
  double delta = 1.0;
  if (L > 0) {
    Mat gram(L, L);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) gram(i, j) = kernel(spec, dict.atoms[i], dict.atoms[j]);
    gram.diagonal().array() += 1e-10;
    const Vec kx = kernel_features(spec, dict, x);
    delta = kernel(spec, x, x) - kx.dot(gram.ldlt().solve(kx));
  }
  if (delta > spec.ald_threshold) {
    dict.atoms.push_back(x);
    u.admitted = true;
  }
  return u;
}

RkhsState rkhs_init(const Vec& x0, const Mat& Sigma0, int p, const Mat& Q0, const Mat& R0) {
  const int n = static_cast<int>(x0.size());
  if (n == 0 || p <= 0) throw std::invalid_argument("kernel filter dimensions must be positive");
  if (Q0.rows() != n || Q0.cols() != n || R0.rows() != p || R0.cols() != p)
    throw std::invalid_argument("initial noise covariance has wrong shape");
  RkhsState s;
  s.n = n;
  s.p = p;
  s.z.resize(2 * n);
  s.z << x0, x0;
  if (Sigma0.rows() == 2 * n && Sigma0.cols() == 2 * n) {
    s.Sigma = Sigma0;
  } else if (Sigma0.rows() == n && Sigma0.cols() == n) {
    s.Sigma = Mat::Zero(2 * n, 2 * n);
    s.Sigma.topLeftCorner(n, n) = Sigma0;
    s.Sigma.bottomRightCorner(n, n) = Sigma0;
  } else {
    throw std::invalid_argument("initial covariance has wrong shape");
  }
  s.dict.atoms.push_back(x0);
  s.A = Mat::Ones(n, 1);
  s.B = Mat::Ones(p, 1);
  s.Q = Q0;
  s.R = R0;
  s.S_xphi = Mat::Zero(n, 1);
  s.S_phi1 = Mat::Zero(1, 1);
  s.S_yphi = Mat::Zero(p, 1);
  s.S_phi = Mat::Zero(1, 1);
  return s;
}

RkhsState rkhs_step(const RkhsState& state, const KernelSpec& spec, const Vec& y, const RkhsOptions& opts) {
  spec.validate();
  if (!(opts.ridge >= 0.0)) throw std::invalid_argument("kernel ridge must be non-negative");
  const int n = state.n;
  if (y.size() != state.p) throw std::invalid_argument("observation has wrong dimension");
  RkhsState s = state;

  // Prediction on z = [x_k; x_{k-1}].
  const Vec x_prev = s.z.head(n);
  Mat Ft = Mat::Zero(2 * n, 2 * n);
  Ft.topLeftCorner(n, n) = s.A * kernel_features_jacobian(spec, s.dict, x_prev);
  Ft.bottomLeftCorner(n, n) = Mat::Identity(n, n);
  Vec zp(2 * n);
  zp << s.A * kernel_features(spec, s.dict, x_prev), x_prev;
  Mat Qt = Mat::Zero(2 * n, 2 * n);
  Qt.topLeftCorner(n, n) = s.Q;
  const Mat Pp = covariance_hygiene(Ft * s.Sigma * Ft.transpose() + Qt);

  // Update.
  const Vec xp = zp.head(n);
  Mat H = Mat::Zero(state.p, 2 * n);
  Vec yp;
  Mat Rk;
  if (opts.known_h) {
    yp = (*opts.known_h)(xp);
    H.leftCols(n) = opts.known_h->jacobian(xp);
    Rk = opts.known_R;
  } else {
    yp = s.B * kernel_features(spec, s.dict, xp);
    H.leftCols(n) = s.B * kernel_features_jacobian(spec, s.dict, xp);
    Rk = s.R;
  }
  const Mat S = 0.5 * (H * Pp * H.transpose() + Rk + (H * Pp * H.transpose() + Rk).transpose());
  const Mat PHt = Pp * H.transpose();
  const Mat K = gain_solve(PHt, S);
  s.z = zp + K * (y - yp);
  s.Sigma = covariance_hygiene(Pp - K * PHt.transpose());
  if (!s.z.allFinite()) throw NumericalError("kernel filter estimate is not finite");

  // E-step.
  const Vec xk = s.z.head(n), xkm1 = s.z.tail(n);
  const Mat C = s.Sigma.topRightCorner(n, n);
  const Mat Pcur = s.Sigma.topLeftCorner(n, n);
  const Mat Pprev = s.Sigma.bottomRightCorner(n, n);
  const Vec phi1 = kernel_features(spec, s.dict, xkm1);
  const Mat dphi1 = kernel_features_jacobian(spec, s.dict, xkm1);
  const Vec phik = kernel_features(spec, s.dict, xk);
  const Mat dphik = kernel_features_jacobian(spec, s.dict, xk);
  const Mat E_xphi1 = xk * phi1.transpose() + C * dphi1.transpose();
  const Mat E_phi1 = phi1 * phi1.transpose() + dphi1 * Pprev * dphi1.transpose();
  const Mat E_phi = phik * phik.transpose() + dphik * Pcur * dphik.transpose();
  const Mat E_xx = Pcur + xk * xk.transpose();

  // M-step.
  s.k += 1;
  const double w = 1.0 / s.k;
  s.S_xphi += E_xphi1;
  s.S_phi1 += E_phi1;
  s.A = solve_sum(s.S_xphi, s.S_phi1, opts.ridge);
  s.Q = covariance_hygiene(Mat((1.0 - w) * s.Q + w * (E_xx - s.A * E_xphi1.transpose() - E_xphi1 * s.A.transpose() +
                                                       s.A * E_phi1 * s.A.transpose())));
  if (!opts.known_h) {
    Mat E_yphi, E_yy;
    if (opts.moments == ObservationMoments::observed) {
      E_yphi = y * phik.transpose();
      E_yy = y * y.transpose();
    } else {
      E_yphi = state.B * E_phi;
      E_yy = state.B * E_phi * state.B.transpose() + state.R;
    }
    s.S_yphi += E_yphi;
    s.S_phi += E_phi;
    s.B = solve_sum(s.S_yphi, s.S_phi, opts.ridge);
    s.R = covariance_hygiene(Mat((1.0 - w) * s.R + w * (E_yy - s.B * E_yphi.transpose() - E_yphi * s.B.transpose() +
                                                         s.B * E_phi * s.B.transpose())));
  }

  // Dictionary.
  const DictionaryUpdate du = dictionary_update(s.dict, spec, xk);
  if (du.admitted) {
    s.A = append_col(s.A, 1.0);
    s.B = append_col(s.B, 1.0);
    s.S_xphi = append_col(s.S_xphi, 0.0);
    s.S_yphi = append_col(s.S_yphi, 0.0);
    s.S_phi1 = append_zero_row_col(s.S_phi1);
    s.S_phi = append_zero_row_col(s.S_phi);
  }
  if (du.evicted >= 0) {
    s.A = drop_col(s.A, du.evicted);
    s.B = drop_col(s.B, du.evicted);
    s.S_xphi = drop_col(s.S_xphi, du.evicted);
    s.S_yphi = drop_col(s.S_yphi, du.evicted);
    s.S_phi1 = drop_row_col(s.S_phi1, du.evicted);
    s.S_phi = drop_row_col(s.S_phi, du.evicted);
  }
  return s;
}

Vec rkhs_estimate(const RkhsState& state) { return state.z.head(state.n); }

RkhsState rkhs_inverse_wrap(const RkhsState& state, const KernelSpec& spec, const Vec& a, const RkhsOptions& opts) {
  return rkhs_step(state, spec, a, opts);
}

namespace {

using json = nlohmann::ordered_json;

json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Mat mat_from(const json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw std::invalid_argument("ragged matrix in snapshot");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

Vec vec_from(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

std::string rkhs_snapshot(const RkhsState& s) {
  json j;
  j["n"] = s.n;
  j["p"] = s.p;
  j["k"] = s.k;
  j["z"] = to_json(s.z);
  j["Sigma"] = to_json(s.Sigma);
  json atoms = json::array();
  for (const Vec& a : s.dict.atoms) atoms.push_back(to_json(a));
  j["atoms"] = atoms;
  j["A"] = to_json(s.A);
  j["B"] = to_json(s.B);
  j["Q"] = to_json(s.Q);
  j["R"] = to_json(s.R);
  j["S_xphi"] = to_json(s.S_xphi);
  j["S_phi1"] = to_json(s.S_phi1);
  j["S_yphi"] = to_json(s.S_yphi);
  j["S_phi"] = to_json(s.S_phi);
  return j.dump();
}

RkhsState rkhs_restore(const std::string& snapshot) {
  json j;
  try {
    j = json::parse(snapshot);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed kernel filter snapshot: ") + e.what());
  }
  RkhsState s;
  s.n = j.at("n").get<int>();
  s.p = j.at("p").get<int>();
  s.k = j.at("k").get<int>();
  s.z = vec_from(j.at("z"));
  s.Sigma = mat_from(j.at("Sigma"));
  for (const auto& a : j.at("atoms")) s.dict.atoms.push_back(vec_from(a));
  s.A = mat_from(j.at("A"));
  s.B = mat_from(j.at("B"));
  s.Q = mat_from(j.at("Q"));
  s.R = mat_from(j.at("R"));
  s.S_xphi = mat_from(j.at("S_xphi"));
  s.S_phi1 = mat_from(j.at("S_phi1"));
  s.S_yphi = mat_from(j.at("S_yphi"));
  s.S_phi = mat_from(j.at("S_phi"));
  return s;
}

}  // namespace ifl
