#include "ifl/forward_filters.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace ifl {

namespace {

void check_belief(const SystemModel& model, const GaussianBelief& b) {
  if (b.mean.size() != model.n || b.cov.rows() != model.n || b.cov.cols() != model.n)
    throw std::invalid_argument("belief dimension does not match the model");
  if (!b.mean.allFinite() || !b.cov.allFinite()) throw NumericalError("belief holds non-finite values");
}

Mat sym(const Mat& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

Vec hessian_trace_term(const std::vector<Mat>& hess, const Mat& P) {
  Vec out(static_cast<Eigen::Index>(hess.size()));
  for (size_t i = 0; i < hess.size(); ++i) out(static_cast<Eigen::Index>(i)) = 0.5 * hess[i].cwiseProduct(P).sum();
  return out;
}

Mat hessian_double_sum(const std::vector<Mat>& A, const std::vector<Mat>& B, const Mat& P) {
  std::vector<Mat> AP, BP;
  AP.reserve(A.size());
  BP.reserve(B.size());
  for (const Mat& a : A) AP.push_back(a * P);
  for (const Mat& b : B) BP.push_back(b * P);
  Mat out(static_cast<Eigen::Index>(A.size()), static_cast<Eigen::Index>(B.size()));
  for (size_t i = 0; i < A.size(); ++i)
    for (size_t j = 0; j < B.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          0.5 * AP[i].cwiseProduct(BP[j].transpose()).sum();
  return out;
}

void apply_measurement(StepRecord& rec, const Vec& y) {
  if (y.size() != rec.predicted_observation.size()) throw std::invalid_argument("observation has wrong dimension");
  if (!y.allFinite()) throw NumericalError("observation is not finite");
  rec.updated.mean = rec.predicted.mean + rec.K * (y - rec.predicted_observation);
}

StepRecord ekf_gain_step(const SystemModel& model, const GaussianBelief& belief) {
  check_belief(model, belief);
  StepRecord r;
  const Mat F = model.f.jacobian(belief.mean);
  r.predicted.mean = model.f(belief.mean);
  r.predicted.cov = covariance_hygiene(F * belief.cov * F.transpose() + model.Q);

  const Mat H = model.h.jacobian(r.predicted.mean);
  r.predicted_observation = model.h(r.predicted.mean);
  r.S = sym(H * r.predicted.cov * H.transpose() + model.R);
  const Mat PHt = r.predicted.cov * H.transpose();
  r.K = gain_solve(PHt, r.S);
  r.updated.mean = r.predicted.mean;
  r.updated.cov = covariance_hygiene(r.predicted.cov - r.K * PHt.transpose());
  return r;
}

StepRecord ekf_step(const SystemModel& model, const GaussianBelief& belief, const Vec& y) {
  StepRecord r = ekf_gain_step(model, belief);
  apply_measurement(r, y);
  return r;
}

StepRecord soekf_gain_step(const SystemModel& model, const GaussianBelief& belief) {
  check_belief(model, belief);
  StepRecord r;
  const Mat& P = belief.cov;
  const std::vector<Mat> Hf = model.f.hessians(belief.mean);
  const Mat F = model.f.jacobian(belief.mean);
  r.predicted.mean = model.f(belief.mean) + hessian_trace_term(Hf, P);
  r.predicted.cov = covariance_hygiene(F * P * F.transpose() + model.Q + hessian_double_sum(Hf, Hf, P));

  const Mat& Pp = r.predicted.cov;
  const std::vector<Mat> Hh = model.h.hessians(r.predicted.mean);
  const Mat H = model.h.jacobian(r.predicted.mean);
  r.predicted_observation = model.h(r.predicted.mean) + hessian_trace_term(Hh, Pp);
  r.S = sym(H * Pp * H.transpose() + model.R + hessian_double_sum(Hh, Hh, Pp));
  const Mat PHt = Pp * H.transpose();
  r.K = gain_solve(PHt, r.S);
  r.updated.mean = r.predicted.mean;
  r.updated.cov = covariance_hygiene(Pp - r.K * PHt.transpose());
  return r;
}

StepRecord soekf_step(const SystemModel& model, const GaussianBelief& belief, const Vec& y) {
  StepRecord r = soekf_gain_step(model, belief);
  apply_measurement(r, y);
  return r;
}

StepRecord soekf_one_step_gain_step(const SystemModel& model, const GaussianBelief& belief) {
  check_belief(model, belief);
  StepRecord r;
  const Vec& x = belief.mean;
  const Mat& P = belief.cov;
  const std::vector<Mat> Hf = model.f.hessians(x);
  const std::vector<Mat> Hh = model.h.hessians(x);
  const Mat F = model.f.jacobian(x);
  const Mat H = model.h.jacobian(x);

  r.predicted.mean = model.f(x) + hessian_trace_term(Hf, P);
  r.predicted.cov = F * P * F.transpose() + model.Q + hessian_double_sum(Hf, Hf, P);
  r.predicted_observation = model.h(x) + hessian_trace_term(Hh, P);
  r.S = sym(H * P * H.transpose() + model.R + hessian_double_sum(Hh, Hh, P));
  r.M = hessian_double_sum(Hf, Hh, P);
  r.K = gain_solve(F * P * H.transpose() + r.M, r.S);
  r.updated.mean = r.predicted.mean;
  r.updated.cov = covariance_hygiene(r.predicted.cov - r.K * r.S * r.K.transpose());
  r.predicted.cov = covariance_hygiene(r.predicted.cov);
  return r;
}

StepRecord soekf_one_step(const SystemModel& model, const GaussianBelief& belief, const Vec& y) {
  StepRecord r = soekf_one_step_gain_step(model, belief);
  apply_measurement(r, y);
  return r;
}

bool normalize_log_weights(const std::vector<double>& log_w, std::vector<double>& weights) {
  const size_t l = log_w.size();
  weights.assign(l, l ? 1.0 / static_cast<double>(l) : 0.0);
  double top = -std::numeric_limits<double>::infinity();
  for (double v : log_w)
    if (std::isfinite(v)) top = std::max(top, v);
  if (!std::isfinite(top)) return false;
  double total = 0.0;
  for (size_t i = 0; i < l; ++i) {
    weights[i] = std::isfinite(log_w[i]) ? std::exp(log_w[i] - top) : 0.0;
    total += weights[i];
  }
  double floored = 0.0;
  for (double& w : weights) {
    w = std::max(w / total, 1e-12);
    floored += w;
  }
  for (double& w : weights) w /= floored;
  return true;
}

GsStepRecord gsekf_gain_step(const SystemModel& model, const GsBelief& belief) {
  if (belief.components.empty()) throw std::invalid_argument("Gaussian-sum belief has no components");
  GsStepRecord out;
  out.components.reserve(belief.components.size());
  for (const GsComponent& c : belief.components) {
    StepRecord r = ekf_gain_step(model, {c.mean, c.cov});
    out.updated.components.push_back({c.weight, r.updated.mean, r.updated.cov});
    out.components.push_back(std::move(r));
  }
  return out;
}

GsStepRecord gsekf_step(const SystemModel& model, const GsBelief& belief, const Vec& y) {
  GsStepRecord out = gsekf_gain_step(model, belief);
  std::vector<double> log_w(out.components.size());
  for (size_t i = 0; i < out.components.size(); ++i) {
    StepRecord& r = out.components[i];
    apply_measurement(r, y);
    out.updated.components[i].mean = r.updated.mean;
    const Vec innov = y - r.predicted_observation;
    const double c = belief.components[i].weight;
    log_w[i] = (c > 0.0 ? std::log(c) : -std::numeric_limits<double>::infinity()) +
               gaussian_logpdf(innov, Vec::Zero(innov.size()), r.S);
  }
  std::vector<double> w;
  out.weights_underflowed = !normalize_log_weights(log_w, w);
  for (size_t i = 0; i < w.size(); ++i) out.updated.components[i].weight = w[i];
  return out;
}

GaussianBelief gsekf_point_estimate(const GsBelief& belief) {
  if (belief.components.empty()) throw std::invalid_argument("Gaussian-sum belief has no components");
  const Eigen::Index n = belief.components.front().mean.size();
  GaussianBelief b{Vec::Zero(n), Mat::Zero(n, n)};
  for (const GsComponent& c : belief.components) b.mean += c.weight * c.mean;
  for (const GsComponent& c : belief.components) {
    const Vec d = c.mean - b.mean;
    b.cov += c.weight * (c.cov + d * d.transpose());
  }
  return b;
}

double DitherSchedule::amplitude(int k) const { return d0 * std::exp(-static_cast<double>(k) / tau); }

DifferentiableMap dithered_observation(const SystemModel& model, const DitherSchedule& schedule, int k) {
  const double d = schedule.active(k) ? schedule.amplitude(k) : 0.0;
  if (d == 0.0) return model.h;
  if (!(d > 0.0) || !std::isfinite(d)) throw std::invalid_argument("dither amplitude must be finite and positive");

  DifferentiableMap out;
  out.in_dim = model.h.in_dim;
  out.out_dim = model.h.out_dim;
  if (model.dithered_h) {
    auto closed = model.dithered_h;
    out.eval = [closed, d](const Vec& x) { return closed(x, d); };
    if (model.dithered_h_jacobian) {
      auto slope = model.dithered_h_jacobian;
      out.jacobian_fn = [slope, d](const Vec& x) { return slope(x, d); };
    }
    return out;
  }

  const Vec u = model.dither_direction.size() ? model.dither_direction : Vec::Ones(model.n);
  using Rule = boost::math::quadrature::gauss<double, 16>;
  std::vector<double> nodes, weights;
  for (size_t i = 0; i < Rule::abscissa().size(); ++i) {
    nodes.push_back(Rule::abscissa()[i]);
    weights.push_back(Rule::weights()[i]);
    nodes.push_back(-Rule::abscissa()[i]);
    weights.push_back(Rule::weights()[i]);
  }
  const DifferentiableMap h = model.h;
  out.eval = [h, u, d, nodes, weights](const Vec& x) {
    Vec acc = Vec::Zero(h.out_dim);
    for (size_t j = 0; j < nodes.size(); ++j) acc += weights[j] * h(Vec(x + d * nodes[j] * u));
    return Vec(0.5 * acc);
  };
  out.jacobian_fn = [h, u, d, nodes, weights](const Vec& x) {
    Mat acc = Mat::Zero(h.out_dim, h.in_dim);
    for (size_t j = 0; j < nodes.size(); ++j) acc += weights[j] * h.jacobian(Vec(x + d * nodes[j] * u));
    return Mat(0.5 * acc);
  };
  return out;
}

SystemModel dithered_model(const SystemModel& model, const DitherSchedule& schedule, int k) {
  if (!schedule.active(k)) return model;
  SystemModel m = model;
  m.h = dithered_observation(model, schedule, k);
  return m;
}

StepRecord dekf_gain_step(const SystemModel& model, const DitherSchedule& schedule, int k,
                          const GaussianBelief& belief) {
  return ekf_gain_step(dithered_model(model, schedule, k), belief);
}

StepRecord dekf_step(const SystemModel& model, const DitherSchedule& schedule, int k,
                     const GaussianBelief& belief, const Vec& y) {
  return ekf_step(dithered_model(model, schedule, k), belief, y);
}

}  // namespace ifl
