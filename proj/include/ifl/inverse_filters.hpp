#pragma once

#include "ifl/forward_filters.hpp"

namespace ifl {

using InverseBelief = GaussianBelief;

/// Defender-side copy of the assumed forward filter. Its mean is overwritten
/// with the defender's own estimate before every advance; it never sees y.
struct ForwardReplica {
  GaussianBelief state;
};

struct InverseStep {
  InverseBelief belief;
  ForwardReplica replica;
  StepRecord forward;  ///< replica step that produced the gain
  StepRecord inverse;
};

/// xhat -> f(xhat) - K h_used(f(xhat)) + K h(x_next).
DifferentiableMap iekf_transition(const SystemModel& model, const Mat& K, const Vec& x_next,
                                  const DifferentiableMap& h_used);

/// Second-order constants of a replica step, evaluated at the defender's estimate.
struct SecondOrderTerms {
  Mat K;
  Vec f_correction;  ///< 0.5 sum e_i tr(Hess f_i Sigma)
  Vec h_correction;  ///< 0.5 sum b_i tr(Hess h_i Sigma')
};

/// Two-step form: f(x) + cf - K [h(f(x) + cf) + ch] + K h(x_next), with Hessians by the chain rule.
DifferentiableMap isoekf_transition(const SystemModel& model, const SecondOrderTerms& terms, const Vec& x_next);

/// One-step form: f(x) - K h(x) + cf - K ch + K h(x_k).
DifferentiableMap isoekf_one_step_transition(const SystemModel& model, const SecondOrderTerms& terms,
                                             const Vec& x_k);

/// Model seen by the defender: state xhat, observation a = g(xhat) + eps, process noise K R K^T.
SystemModel inverse_model(const SystemModel& model, DifferentiableMap transition, const Mat& K);

InverseStep iekf_step(const SystemModel& model, const InverseBelief& inv, const ForwardReplica& replica,
                      const Vec& x_next, const Vec& a_next);

InverseStep isoekf_step(const SystemModel& model, const InverseBelief& inv, const ForwardReplica& replica,
                        const Vec& x_next, const Vec& a_next);

/// Consumes (x_k, a_k) and returns the estimate of xhat_{k+1}.
InverseStep isoekf_one_step(const SystemModel& model, const InverseBelief& inv, const ForwardReplica& replica,
                            const Vec& x_k, const Vec& a_k);

enum class DitherAwareness {
  without_dither,  ///< plain h inside the transition
  with_dither,     ///< h* inside the transition during the transient
};

/// `k` indexes x_next and a_next. The replica always runs the dithered forward filter.
InverseStep idekf_step(const SystemModel& model, const DitherSchedule& schedule, int k, const InverseBelief& inv,
                       const ForwardReplica& replica, const Vec& x_next, const Vec& a_next,
                       DitherAwareness awareness);

// Gaussian-sum inverse. The augmented state stacks the l forward component
// means followed by the l forward weights: z in R^{l(n+1)}.

struct AugmentedGsState {
  int l = 0;
  int n = 0;
  GsBelief mixture;
};

struct GsReplica {
  GsBelief state;
};

struct IgsekfStep {
  AugmentedGsState state;
  GsReplica replica;
  GsStepRecord forward;
  bool weights_underflowed = false;
};

Vec pack_forward_mixture(const GsBelief& forward);
/// Means and weights only; covariances are left empty.
GsBelief unpack_forward_mixture(const Vec& z, int l, int n);

/// Clamp to [1e-12, 1] and renormalise; uniform when nothing survives.
Vec project_weights(const Vec& w);

/// l_bar components around pack(guess), perturbed by N(0, scale * cov0) when l_bar > 1.
AugmentedGsState igsekf_init(const GsBelief& forward_guess, int l_bar, const Mat& cov0, RngStream& rng,
                             double perturb_scale = 0.1);

/// Component means follow their EKF updates, weights follow the Gaussian reweighting.
DifferentiableMap igsekf_transition(const SystemModel& model, const GsStepRecord& forward, const Vec& x_next);

/// Derivative of the transition with respect to the forward observation noise.
Mat igsekf_noise_jacobian(const SystemModel& model, const GsStepRecord& forward, const Vec& x_next, const Vec& z);

/// z -> g(sum_i c_i xbar_i).
DifferentiableMap igsekf_observation(const SystemModel& model, int l);

IgsekfStep igsekf_step(const SystemModel& model, const AugmentedGsState& state, const GsReplica& replica,
                       const Vec& x_next, const Vec& a_next);

/// Forward-mixture view of the moment-matched augmented mean, weights projected.
GsBelief igsekf_forward_view(const AugmentedGsState& state);

/// sum_i c_i xbar_i taken from the moment-matched augmented mean.
Vec igsekf_point_estimate(const AugmentedGsState& state);

}  // namespace ifl
