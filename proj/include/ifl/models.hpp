#pragma once

#include "ifl/core.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ifl {

using VecFn = std::function<Vec(const Vec&)>;
using JacFn = std::function<Mat(const Vec&)>;
using HessFn = std::function<std::vector<Mat>(const Vec&)>;

/// Central-difference Jacobian, step 1e-5 * (1 + |x_i|).
Mat jacobian(const VecFn& fn, const Vec& x);

/// Central-difference Hessian of output component `i`, step 1e-4 * (1 + |x_j|).
Mat hessian_component(const VecFn& fn, int i, const Vec& x);

/// All output Hessians at once; entry i is the Hessian of component i.
std::vector<Mat> hessians(const VecFn& fn, const Vec& x);

/// A vector map with optional analytic first and second derivatives.
struct DifferentiableMap {
  int in_dim = 0;
  int out_dim = 0;
  VecFn eval;
  JacFn jacobian_fn;  ///< optional
  HessFn hessians_fn; ///< optional

  Vec operator()(const Vec& x) const;
  Mat jacobian(const Vec& x) const;
  std::vector<Mat> hessians(const Vec& x) const;
};

/// Affine map x -> A x + b with exact derivatives.
DifferentiableMap linear_map(const Mat& A, const Vec& b = Vec());

/// x_{k+1} = f(x_k) + w_k,  y_k = h(x_k) + v_k,  a_k = g(xhat_k) + eps_k.
struct SystemModel {
  std::string id;
  int n = 0;
  int p = 0;
  int na = 0;
  DifferentiableMap f;
  DifferentiableMap h;
  DifferentiableMap g;
  Mat Q;
  Mat R;
  Mat Sigma_eps;

  /// Direction along which a scalar dither enters h; defaults to all ones.
  Vec dither_direction;
  /// Optional closed form of the dithered observation h*(x; d).
  std::function<Vec(const Vec&, double)> dithered_h;
  /// Jacobian of dithered_h; finite differences when absent.
  std::function<Mat(const Vec&, double)> dithered_h_jacobian;

  void validate() const;
};

struct Trajectory {
  std::vector<Vec> states;        ///< x_0 .. x_H
  std::vector<Vec> observations;  ///< y_1 .. y_H, observations[k-1] = y_k
};

/// Draws w_k then v_{k+1} each step.
Trajectory simulate(const SystemModel& model, const Vec& x0, int horizon, RngStream& rng);

/// a_k = g(xhat_k) + eps_k for each estimate in order.
std::vector<Vec> emit_actions(const SystemModel& model, const std::vector<Vec>& estimates, RngStream& rng);

SystemModel make_linear_model(const Mat& A, const Mat& C, const Mat& Gact, const Mat& Q, const Mat& R,
                              const Mat& Sigma_eps);

struct FmDemodParams {
  double T = 2.0 * 3.14159265358979323846 / 16.0;
  double beta = 100.0;
  double w_var = 0.01;
  double eps_var = 5.0;
  /// true: theta row uses -beta e^{-T/beta} - 1; false: beta (e^{-T/beta} - 1).
  bool printed_transition = true;
};

/// State (lambda, theta); y = sqrt(2) [sin theta, cos theta]; a = lambda^2.
SystemModel fm_demod_model(const FmDemodParams& params = {});

struct BearingParams {
  double dt = 20.0;
  double Y = 1.0e5;
  double w_var = 0.01;
  double v_var = 4.0;
  double eps_var = 2.25;
};

/// State (p_x/Y, s/Y, s, X/Y); y = atan(x4 - x1); a = x4^2.
SystemModel bearing_model(const BearingParams& params = {});

}  // namespace ifl
