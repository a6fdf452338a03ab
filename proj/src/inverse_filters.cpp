#include "ifl/inverse_filters.hpp"

namespace ifl {

DifferentiableMap iekf_transition(const SystemModel& model, const Mat& K, const Vec& x_next,
                                  const DifferentiableMap& h_used) {
  if (K.rows() != model.n || K.cols() != model.p) throw std::invalid_argument("forward gain has wrong shape");
  const DifferentiableMap f = model.f;
  const Vec drive = K * model.h(x_next);
  DifferentiableMap m;
  m.in_dim = m.out_dim = model.n;
  m.eval = [f, h_used, K, drive](const Vec& x) {
    const Vec fx = f(x);
    return Vec(fx - K * h_used(fx) + drive);
  };
  m.jacobian_fn = [f, h_used, K](const Vec& x) {
    const Mat F = f.jacobian(x);
    return Mat(F - K * (h_used.jacobian(f(x)) * F));
  };
  return m;
}

DifferentiableMap isoekf_transition(const SystemModel& model, const SecondOrderTerms& t, const Vec& x_next) {
  const DifferentiableMap f = model.f, h = model.h;
  const Mat K = t.K;
  const Vec cf = t.f_correction;
  const Vec offset = K * (model.h(x_next) - t.h_correction);
  DifferentiableMap m;
  m.in_dim = m.out_dim = model.n;
  m.eval = [f, h, K, cf, offset](const Vec& x) {
    const Vec u = f(x) + cf;
    return Vec(u - K * h(u) + offset);
  };
  m.jacobian_fn = [f, h, K, cf](const Vec& x) {
    const Mat F = f.jacobian(x);
    return Mat(F - K * (h.jacobian(Vec(f(x) + cf)) * F));
  };
  m.hessians_fn = [f, h, K, cf](const Vec& x) {
    const Vec u = f(x) + cf;
    const Mat F = f.jacobian(x);
    const Mat Hu = h.jacobian(u);
    const std::vector<Mat> Hf = f.hessians(x);
    const std::vector<Mat> Hh = h.hessians(u);
    std::vector<Mat> inner(Hh.size());
    for (size_t j = 0; j < Hh.size(); ++j) {
      inner[j] = F.transpose() * Hh[j] * F;
      for (size_t q = 0; q < Hf.size(); ++q) inner[j] += Hu(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(q)) * Hf[q];
    }
    std::vector<Mat> out = Hf;
    for (size_t i = 0; i < out.size(); ++i)
      for (size_t j = 0; j < inner.size(); ++j)
        out[i] -= K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * inner[j];
    return out;
  };
  return m;
}

DifferentiableMap isoekf_one_step_transition(const SystemModel& model, const SecondOrderTerms& t, const Vec& x_k) {
  const DifferentiableMap f = model.f, h = model.h;
  const Mat K = t.K;
  const Vec offset = t.f_correction - K * t.h_correction + K * model.h(x_k);
  DifferentiableMap m;
  m.in_dim = m.out_dim = model.n;
  m.eval = [f, h, K, offset](const Vec& x) { return Vec(f(x) - K * h(x) + offset); };
  m.jacobian_fn = [f, h, K](const Vec& x) { return Mat(f.jacobian(x) - K * h.jacobian(x)); };
  m.hessians_fn = [f, h, K](const Vec& x) {
    std::vector<Mat> out = f.hessians(x);
    const std::vector<Mat> Hh = h.hessians(x);
    for (size_t i = 0; i < out.size(); ++i)
      for (size_t j = 0; j < Hh.size(); ++j)
        out[i] -= K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * Hh[j];
    return out;
  };
  return m;
}

SystemModel inverse_model(const SystemModel& model, DifferentiableMap transition, const Mat& K) {
  SystemModel m;
  m.id = model.id + "-inverse";
  m.n = model.n;
  m.p = model.na;
  m.na = model.na;
  m.f = std::move(transition);
  m.h = model.g;
  m.g = model.g;
  m.Q = K * model.R * K.transpose();
  m.R = model.Sigma_eps;
  m.Sigma_eps = model.Sigma_eps;
  return m;
}

namespace {

GaussianBelief replica_input(const InverseBelief& inv, const ForwardReplica& replica, int n) {
  if (replica.state.cov.rows() != n || replica.state.cov.cols() != n)
    throw std::invalid_argument("replica covariance has wrong shape");
  return {inv.mean, replica.state.cov};
}

}  // namespace

InverseStep iekf_step(const SystemModel& model, const InverseBelief& inv, const ForwardReplica& replica,
                      const Vec& x_next, const Vec& a_next) {
  InverseStep out;
  out.forward = ekf_gain_step(model, replica_input(inv, replica, model.n));
  const SystemModel im = inverse_model(model, iekf_transition(model, out.forward.K, x_next, model.h), out.forward.K);
  out.inverse = ekf_step(im, inv, a_next);
  out.belief = out.inverse.updated;
  out.replica.state = out.forward.updated;
  return out;
}

InverseStep isoekf_step(const SystemModel& model, const InverseBelief& inv, const ForwardReplica& replica,
                        const Vec& x_next, const Vec& a_next) {
  InverseStep out;
  out.forward = soekf_gain_step(model, replica_input(inv, replica, model.n));
  SecondOrderTerms t{out.forward.K, out.forward.predicted.mean - model.f(inv.mean),
                     out.forward.predicted_observation - model.h(out.forward.predicted.mean)};
  const SystemModel im = inverse_model(model, isoekf_transition(model, t, x_next), out.forward.K);
  out.inverse = soekf_step(im, inv, a_next);
  out.belief = out.inverse.updated;
  out.replica.state = out.forward.updated;
  return out;
}

InverseStep isoekf_one_step(const SystemModel& model, const InverseBelief& inv, const ForwardReplica& replica,
                            const Vec& x_k, const Vec& a_k) {
  InverseStep out;
  out.forward = soekf_one_step_gain_step(model, replica_input(inv, replica, model.n));
  SecondOrderTerms t{out.forward.K, out.forward.predicted.mean - model.f(inv.mean),
                     out.forward.predicted_observation - model.h(inv.mean)};
  const SystemModel im = inverse_model(model, isoekf_one_step_transition(model, t, x_k), out.forward.K);
  out.inverse = soekf_one_step(im, inv, a_k);
  out.belief = out.inverse.updated;
  out.replica.state = out.forward.updated;
  return out;
}

InverseStep idekf_step(const SystemModel& model, const DitherSchedule& schedule, int k, const InverseBelief& inv,
                       const ForwardReplica& replica, const Vec& x_next, const Vec& a_next,
                       DitherAwareness awareness) {
  InverseStep out;
  out.forward = dekf_gain_step(model, schedule, k, replica_input(inv, replica, model.n));
  const DifferentiableMap h_used =
      awareness == DitherAwareness::with_dither ? dithered_observation(model, schedule, k) : model.h;
  const SystemModel im = inverse_model(model, iekf_transition(model, out.forward.K, x_next, h_used), out.forward.K);
  out.inverse = ekf_step(im, inv, a_next);
  out.belief = out.inverse.updated;
  out.replica.state = out.forward.updated;
  return out;
}

}  // namespace ifl
