#pragma once

#include "ifl/models.hpp"

#include <vector>

namespace ifl {

struct GaussianBelief {
  Vec mean;
  Mat cov;
};

/// Everything one filter step computes. `updated.mean` equals
/// `predicted.mean + K (y - predicted_observation)`.
struct StepRecord {
  GaussianBelief predicted;
  Vec predicted_observation;
  Mat S;
  Mat K;
  Mat M;  ///< cross term of the one-step second-order form; empty otherwise
  GaussianBelief updated;
};

/// 0.5 * sum_i e_i tr(H_i P)
Vec hessian_trace_term(const std::vector<Mat>& hess, const Mat& P);

/// 0.5 * sum_ij e_i e_j^T tr(A_i P B_j P)
Mat hessian_double_sum(const std::vector<Mat>& A, const std::vector<Mat>& B, const Mat& P);

/// Applies the measurement correction to a record produced by one of the *_gain_step functions.
void apply_measurement(StepRecord& rec, const Vec& y);

// The *_gain_step functions run the covariance and gain recursion without an
// observation. `updated.mean` is left at the zero-innovation value.

StepRecord ekf_gain_step(const SystemModel& model, const GaussianBelief& belief);
StepRecord ekf_step(const SystemModel& model, const GaussianBelief& belief, const Vec& y);

/// Two-step second-order EKF.
StepRecord soekf_gain_step(const SystemModel& model, const GaussianBelief& belief);
StepRecord soekf_step(const SystemModel& model, const GaussianBelief& belief, const Vec& y);

/// One-step (prediction form) second-order EKF: consumes y_k with xhat_k, returns xhat_{k+1}.
StepRecord soekf_one_step_gain_step(const SystemModel& model, const GaussianBelief& belief);
StepRecord soekf_one_step(const SystemModel& model, const GaussianBelief& belief, const Vec& y);

struct GsComponent {
  double weight = 0.0;
  Vec mean;
  Mat cov;
};

struct GsBelief {
  std::vector<GsComponent> components;
};

struct GsStepRecord {
  GsBelief updated;
  std::vector<StepRecord> components;
  bool weights_underflowed = false;
};

/// Normalised weights from log-weights with a floor of 1e-12.
/// Returns false and uniform weights when no log-weight is finite.
bool normalize_log_weights(const std::vector<double>& log_w, std::vector<double>& weights);

/// Per-component EKF without reweighting.
GsStepRecord gsekf_gain_step(const SystemModel& model, const GsBelief& belief);
GsStepRecord gsekf_step(const SystemModel& model, const GsBelief& belief, const Vec& y);

/// Moment-matched single Gaussian.
GaussianBelief gsekf_point_estimate(const GsBelief& belief);

struct DitherSchedule {
  double d0 = 0.5;
  double tau = 20.0;
  int transient_steps = 80;

  double amplitude(int k) const;
  bool active(int k) const { return k < transient_steps; }
};

/// h*(x) = integral of h(x + a u) p(a) da, p uniform on [-d, d], d = d(k).
/// Uses the model's closed form when present, else 16-node Gauss-Legendre.
DifferentiableMap dithered_observation(const SystemModel& model, const DitherSchedule& schedule, int k);

/// Same model with h replaced by h* while the schedule is active at step k.
SystemModel dithered_model(const SystemModel& model, const DitherSchedule& schedule, int k);

/// `k` indexes the observation `y`.
StepRecord dekf_gain_step(const SystemModel& model, const DitherSchedule& schedule, int k,
                          const GaussianBelief& belief);
StepRecord dekf_step(const SystemModel& model, const DitherSchedule& schedule, int k,
                     const GaussianBelief& belief, const Vec& y);

}  // namespace ifl
