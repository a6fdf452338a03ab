#include "ifl/models.hpp"

#include <cmath>

namespace ifl {

namespace {

Vec checked(const VecFn& fn, const Vec& x) {
  Vec y = fn(x);
  if (!y.allFinite()) throw NumericalError("function evaluation produced a non-finite value");
  return y;
}

}  // namespace

Mat jacobian(const VecFn& fn, const Vec& x) {
  const Vec y0 = checked(fn, x);
  Mat J(y0.size(), x.size());
  Vec xp = x, xm = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double step = 1e-5 * (1.0 + std::abs(x(j)));
    xp(j) = x(j) + step;
    xm(j) = x(j) - step;
    J.col(j) = (checked(fn, xp) - checked(fn, xm)) / (2.0 * step);
    xp(j) = xm(j) = x(j);
  }
  return J;
}

std::vector<Mat> hessians(const VecFn& fn, const Vec& x) {
  const Eigen::Index n = x.size();
  const Vec y0 = checked(fn, x);
  const Eigen::Index m = y0.size();
  std::vector<Mat> out(static_cast<size_t>(m), Mat::Zero(n, n));
  Vec s(n);
  for (Eigen::Index j = 0; j < n; ++j) s(j) = 1e-4 * (1.0 + std::abs(x(j)));

  auto shifted = [&](Eigen::Index a, double da, Eigen::Index b, double db) {
    Vec z = x;
    z(a) += da;
    z(b) += db;
    return checked(fn, z);
  };
  for (Eigen::Index a = 0; a < n; ++a) {
    const Vec fp = shifted(a, s(a), a, 0.0);
    const Vec fm = shifted(a, -s(a), a, 0.0);
    const Vec d2 = (fp - 2.0 * y0 + fm) / (s(a) * s(a));
    for (Eigen::Index i = 0; i < m; ++i) out[i](a, a) = d2(i);
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const Vec mixed = (shifted(a, s(a), b, s(b)) - shifted(a, s(a), b, -s(b)) -
                         shifted(a, -s(a), b, s(b)) + shifted(a, -s(a), b, -s(b))) /
                        (4.0 * s(a) * s(b));
      for (Eigen::Index i = 0; i < m; ++i) out[i](a, b) = out[i](b, a) = mixed(i);
    }
  }
  return out;
}

Mat hessian_component(const VecFn& fn, int i, const Vec& x) {
  const Vec y0 = checked(fn, x);
  if (i < 0 || i >= y0.size()) throw std::invalid_argument("hessian_component: output index out of range");
  VecFn scalar = [&fn, i](const Vec& z) { return Vec::Constant(1, fn(z)(i)); };
  return hessians(scalar, x).front();
}

Vec DifferentiableMap::operator()(const Vec& x) const {
  if (x.size() != in_dim) throw std::invalid_argument("map evaluated with wrong input dimension");
  return checked(eval, x);
}

Mat DifferentiableMap::jacobian(const Vec& x) const {
  if (jacobian_fn) return jacobian_fn(x);
  return ifl::jacobian(eval, x);
}

std::vector<Mat> DifferentiableMap::hessians(const Vec& x) const {
  if (hessians_fn) return hessians_fn(x);
  return ifl::hessians(eval, x);
}

DifferentiableMap linear_map(const Mat& A, const Vec& b) {
  const Vec offset = b.size() ? b : Vec::Zero(A.rows());
  DifferentiableMap m;
  m.in_dim = static_cast<int>(A.cols());
  m.out_dim = static_cast<int>(A.rows());
  m.eval = [A, offset](const Vec& x) { return Vec(A * x + offset); };
  m.jacobian_fn = [A](const Vec&) { return A; };
  const int n = m.in_dim, p = m.out_dim;
  m.hessians_fn = [n, p](const Vec&) { return std::vector<Mat>(static_cast<size_t>(p), Mat::Zero(n, n)); };
  return m;
}

void SystemModel::validate() const {
  auto square = [](const Mat& m, int d, const char* name) {
    if (m.rows() != d || m.cols() != d)
      throw std::invalid_argument(std::string("model ") + name + " has wrong shape");
  };
  if (n <= 0 || p <= 0 || na <= 0) throw std::invalid_argument("model dimensions must be positive");
  if (f.in_dim != n || f.out_dim != n) throw std::invalid_argument("model f has wrong dimensions");
  if (h.in_dim != n || h.out_dim != p) throw std::invalid_argument("model h has wrong dimensions");
  if (g.in_dim != n || g.out_dim != na) throw std::invalid_argument("model g has wrong dimensions");
  square(Q, n, "Q");
  square(R, p, "R");
  square(Sigma_eps, na, "Sigma_eps");
  if (dither_direction.size() != 0 && dither_direction.size() != n)
    throw std::invalid_argument("model dither direction has wrong dimension");
}

Trajectory simulate(const SystemModel& model, const Vec& x0, int horizon, RngStream& rng) {
  model.validate();
  if (horizon < 0) throw std::invalid_argument("simulate: negative horizon");
  if (x0.size() != model.n) throw std::invalid_argument("simulate: initial state has wrong dimension");
  const Mat Lq = noise_factor(model.Q);
  const Mat Lr = noise_factor(model.R);
  Trajectory t;
  t.states.reserve(static_cast<size_t>(horizon) + 1);
  t.observations.reserve(static_cast<size_t>(horizon));
  t.states.push_back(x0);
  for (int k = 0; k < horizon; ++k) {
    Vec x = sample_with_factor(rng, model.f(t.states.back()), Lq);
    Vec y = sample_with_factor(rng, model.h(x), Lr);
    t.states.push_back(std::move(x));
    t.observations.push_back(std::move(y));
  }
  return t;
}

std::vector<Vec> emit_actions(const SystemModel& model, const std::vector<Vec>& estimates, RngStream& rng) {
  const Mat L = noise_factor(model.Sigma_eps);
  std::vector<Vec> actions;
  actions.reserve(estimates.size());
  for (const Vec& xh : estimates) actions.push_back(sample_with_factor(rng, model.g(xh), L));
  return actions;
}

SystemModel make_linear_model(const Mat& A, const Mat& C, const Mat& Gact, const Mat& Q, const Mat& R,
                              const Mat& Sigma_eps) {
  SystemModel m;
  m.id = "linear";
  m.n = static_cast<int>(A.rows());
  m.p = static_cast<int>(C.rows());
  m.na = static_cast<int>(Gact.rows());
  m.f = linear_map(A);
  m.h = linear_map(C);
  m.g = linear_map(Gact);
  m.Q = Q;
  m.R = R;
  m.Sigma_eps = Sigma_eps;
  m.validate();
  return m;
}

SystemModel fm_demod_model(const FmDemodParams& prm) {
  const double e = std::exp(-prm.T / prm.beta);
  Mat F(2, 2);
  F << e, 0.0, (prm.printed_transition ? -prm.beta * e - 1.0 : prm.beta * (e - 1.0)), 1.0;
  Vec gain(2);
  gain << 1.0, -prm.beta;

  SystemModel m;
  m.id = "fm-demod";
  m.n = 2;
  m.p = 2;
  m.na = 1;
  m.f = linear_map(F);

  const double r2 = std::sqrt(2.0);
  m.h.in_dim = 2;
  m.h.out_dim = 2;
  m.h.eval = [r2](const Vec& x) { return Vec((Vec(2) << r2 * std::sin(x(1)), r2 * std::cos(x(1))).finished()); };
  m.h.jacobian_fn = [r2](const Vec& x) {
    Mat J = Mat::Zero(2, 2);
    J(0, 1) = r2 * std::cos(x(1));
    J(1, 1) = -r2 * std::sin(x(1));
    return J;
  };
  m.h.hessians_fn = [r2](const Vec& x) {
    std::vector<Mat> H(2, Mat::Zero(2, 2));
    H[0](1, 1) = -r2 * std::sin(x(1));
    H[1](1, 1) = -r2 * std::cos(x(1));
    return H;
  };

  m.g.in_dim = 2;
  m.g.out_dim = 1;
  m.g.eval = [](const Vec& x) { return Vec::Constant(1, x(0) * x(0)); };
  m.g.jacobian_fn = [](const Vec& x) {
    Mat J = Mat::Zero(1, 2);
    J(0, 0) = 2.0 * x(0);
    return J;
  };
  m.g.hessians_fn = [](const Vec&) {
    std::vector<Mat> H(1, Mat::Zero(2, 2));
    H[0](0, 0) = 2.0;
    return H;
  };

  m.Q = prm.w_var * gain * gain.transpose();
  m.R = Mat::Identity(2, 2);
  m.Sigma_eps = Mat::Constant(1, 1, prm.eps_var);
  m.dither_direction = Vec::Ones(2);
  m.validate();
  return m;
}

namespace {

// Uniform average of atan over [u - d, u + d].
double dithered_atan(double u, double d) {
  if (d < 1e-4 * (1.0 + std::abs(u))) {
    const double s = 1.0 + u * u;
    return std::atan(u) - d * d * u / (3.0 * s * s);
  }
  auto antideriv = [](double v) { return v * std::atan(v) - 0.5 * std::log1p(v * v); };
  return (antideriv(u + d) - antideriv(u - d)) / (2.0 * d);
}

// Derivative of dithered_atan with respect to u.
double dithered_atan_slope(double u, double d) {
  const double s = 1.0 + u * u;
  if (d < 1e-4 * (1.0 + std::abs(u))) return 1.0 / s + d * d * (3.0 * u * u - 1.0) / (3.0 * s * s * s);
  return (std::atan(u + d) - std::atan(u - d)) / (2.0 * d);
}

}  // namespace

SystemModel bearing_model(const BearingParams& prm) {
  Mat F = Mat::Identity(4, 4);
  F(0, 1) = prm.dt;
  Vec gain(4);
  gain << 0.0, prm.dt / prm.Y, prm.dt, 0.0;

  SystemModel m;
  m.id = "bearing";
  m.n = 4;
  m.p = 1;
  m.na = 1;
  m.f = linear_map(F);

  Vec u = Vec::Zero(4);
  u(0) = -1.0;
  u(3) = 1.0;
  m.h.in_dim = 4;
  m.h.out_dim = 1;
  m.h.eval = [](const Vec& x) { return Vec::Constant(1, std::atan(x(3) - x(0))); };
  m.h.jacobian_fn = [u](const Vec& x) {
    const double d = x(3) - x(0);
    return Mat(u.transpose() / (1.0 + d * d));
  };
  m.h.hessians_fn = [u](const Vec& x) {
    const double d = x(3) - x(0);
    const double s = 1.0 + d * d;
    return std::vector<Mat>{Mat(-2.0 * d / (s * s) * u * u.transpose())};
  };

  m.g.in_dim = 4;
  m.g.out_dim = 1;
  m.g.eval = [](const Vec& x) { return Vec::Constant(1, x(3) * x(3)); };
  m.g.jacobian_fn = [](const Vec& x) {
    Mat J = Mat::Zero(1, 4);
    J(0, 3) = 2.0 * x(3);
    return J;
  };
  m.g.hessians_fn = [](const Vec&) {
    std::vector<Mat> H(1, Mat::Zero(4, 4));
    H[0](3, 3) = 2.0;
    return H;
  };

  m.Q = prm.w_var * gain * gain.transpose();
  m.R = Mat::Constant(1, 1, prm.v_var);
  m.Sigma_eps = Mat::Constant(1, 1, prm.eps_var);
  m.dither_direction = Vec::Zero(4);
  m.dither_direction(3) = 1.0;
  m.dithered_h = [](const Vec& x, double d) { return Vec::Constant(1, dithered_atan(x(3) - x(0), d)); };
  m.dithered_h_jacobian = [u](const Vec& x, double d) {
    return Mat(dithered_atan_slope(x(3) - x(0), d) * u.transpose());
  };
  m.validate();
  return m;
}

}  // namespace ifl
