#pragma once

#include "ifl/models.hpp"

#include <functional>

namespace testing_support {

using ifl::Mat;
using ifl::Vec;

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Vec scalar(double v) { return Vec::Constant(1, v); }
inline Mat scalar_mat(double v) { return Mat::Constant(1, 1, v); }

/// Scalar map with analytic first and second derivatives.
inline ifl::DifferentiableMap scalar_map(std::function<double(double)> f, std::function<double(double)> df,
                                         std::function<double(double)> d2f) {
  ifl::DifferentiableMap m;
  m.in_dim = m.out_dim = 1;
  m.eval = [f](const Vec& x) { return scalar(f(x(0))); };
  m.jacobian_fn = [df](const Vec& x) { return scalar_mat(df(x(0))); };
  m.hessians_fn = [d2f](const Vec& x) { return std::vector<Mat>{scalar_mat(d2f(x(0)))}; };
  return m;
}

inline ifl::DifferentiableMap identity1() {
  return scalar_map([](double x) { return x; }, [](double) { return 1.0; }, [](double) { return 0.0; });
}

inline ifl::DifferentiableMap square1() {
  return scalar_map([](double x) { return x * x; }, [](double x) { return 2 * x; }, [](double) { return 2.0; });
}

inline ifl::DifferentiableMap cube1() {
  return scalar_map([](double x) { return x * x * x; }, [](double x) { return 3 * x * x; },
                    [](double x) { return 6 * x; });
}

inline ifl::SystemModel scalar_model(ifl::DifferentiableMap f, ifl::DifferentiableMap h, double q, double r,
                                     double eps = 1.0) {
  ifl::SystemModel m;
  m.id = "scalar";
  m.n = m.p = m.na = 1;
  m.f = std::move(f);
  m.h = std::move(h);
  m.g = identity1();
  m.Q = scalar_mat(q);
  m.R = scalar_mat(r);
  m.Sigma_eps = scalar_mat(eps);
  m.validate();
  return m;
}

inline double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testing_support
