#include "ifl/inverse_filters.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace ifl {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Per-component constants of one forward Gaussian-sum step.
struct GsTransitionContext {
  int l = 0, n = 0, p = 0;
  DifferentiableMap f, h;
  std::vector<Mat> K, Sinv;
  std::vector<double> logdet;
  Vec hx;
};

struct GsTransitionEval {
  std::vector<Vec> fx, r, new_mean;
  std::vector<double> scaled_lik;  // exp(log l_i - max)
  Vec new_weight;
  double normaliser = 0.0;
};

std::shared_ptr<const GsTransitionContext> make_context(const SystemModel& model, const GsStepRecord& fwd,
                                                        const Vec& x_next) {
  auto ctx = std::make_shared<GsTransitionContext>();
  ctx->l = static_cast<int>(fwd.components.size());
  ctx->n = model.n;
  ctx->p = model.p;
  ctx->f = model.f;
  ctx->h = model.h;
  ctx->hx = model.h(x_next);
  for (const StepRecord& r : fwd.components) {
    Eigen::LLT<Mat> llt(r.S);
    if (llt.info() != Eigen::Success)
      throw NumericalError("forward component innovation covariance is singular (condition " +
                           std::to_string(condition_number(r.S)) + ")");
    ctx->K.push_back(r.K);
    ctx->Sinv.push_back(llt.solve(Mat::Identity(r.S.rows(), r.S.cols())));
    ctx->logdet.push_back(2.0 * llt.matrixLLT().diagonal().array().log().sum());
  }
  return ctx;
}

GsTransitionEval evaluate(const GsTransitionContext& c, const Vec& z) {
  if (z.size() != c.l * (c.n + 1)) throw std::invalid_argument("augmented state has wrong dimension");
  GsTransitionEval e;
  std::vector<double> loglik(static_cast<size_t>(c.l));
  double top = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < c.l; ++i) {
    const Vec fx = c.f(Vec(z.segment(i * c.n, c.n)));
    const Vec r = c.hx - c.h(fx);
    e.new_mean.push_back(fx + c.K[i] * r);
    loglik[i] = -0.5 * (r.dot(c.Sinv[i] * r) + c.logdet[i] + c.p * kLog2Pi);
    top = std::max(top, loglik[i]);
    e.fx.push_back(fx);
    e.r.push_back(r);
  }
  e.new_weight.resize(c.l);
  for (int i = 0; i < c.l; ++i) {
    e.scaled_lik.push_back(std::exp(loglik[i] - top));
    e.new_weight(i) = z(c.l * c.n + i) * e.scaled_lik[i];
    e.normaliser += e.new_weight(i);
  }
  if (!(std::abs(e.normaliser) > 0.0) || !std::isfinite(e.normaliser))
    throw NumericalError("forward weight normaliser vanished");
  e.new_weight /= e.normaliser;
  return e;
}

}  // namespace

Vec pack_forward_mixture(const GsBelief& forward) {
  const int l = static_cast<int>(forward.components.size());
  if (l == 0) throw std::invalid_argument("forward mixture has no components");
  const int n = static_cast<int>(forward.components.front().mean.size());
  Vec z(l * (n + 1));
  for (int i = 0; i < l; ++i) {
    z.segment(i * n, n) = forward.components[i].mean;
    z(l * n + i) = forward.components[i].weight;
  }
  return z;
}

GsBelief unpack_forward_mixture(const Vec& z, int l, int n) {
  if (z.size() != l * (n + 1)) throw std::invalid_argument("augmented state has wrong dimension");
  GsBelief b;
  for (int i = 0; i < l; ++i) b.components.push_back({z(l * n + i), Vec(z.segment(i * n, n)), Mat()});
  return b;
}

Vec project_weights(const Vec& w) {
  Vec out = w;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out(i))) throw NumericalError("forward weight coordinate is not finite");
    out(i) = std::clamp(out(i), 1e-12, 1.0);
  }
  const double total = out.sum();
  if (!(total > 0.0)) return Vec::Constant(w.size(), 1.0 / static_cast<double>(w.size()));
  return out / total;
}

AugmentedGsState igsekf_init(const GsBelief& forward_guess, int l_bar, const Mat& cov0, RngStream& rng,
                             double perturb_scale) {
  if (l_bar < 1) throw std::invalid_argument("inverse mixture needs at least one component");
  AugmentedGsState s;
  s.l = static_cast<int>(forward_guess.components.size());
  s.n = s.l ? static_cast<int>(forward_guess.components.front().mean.size()) : 0;
  const Vec z0 = pack_forward_mixture(forward_guess);
  if (cov0.rows() != z0.size() || cov0.cols() != z0.size())
    throw std::invalid_argument("inverse initial covariance has wrong shape");
  const Mat L = noise_factor(Mat(perturb_scale * cov0));
  for (int j = 0; j < l_bar; ++j) {
    Vec z = l_bar > 1 ? sample_with_factor(rng, z0, L) : z0;
    z.tail(s.l) = project_weights(z.tail(s.l));
    s.mixture.components.push_back({1.0 / l_bar, z, cov0});
  }
  return s;
}

DifferentiableMap igsekf_transition(const SystemModel& model, const GsStepRecord& forward, const Vec& x_next) {
  auto ctx = make_context(model, forward, x_next);
  DifferentiableMap m;
  m.in_dim = m.out_dim = ctx->l * (ctx->n + 1);
  m.eval = [ctx](const Vec& z) {
    const GsTransitionEval e = evaluate(*ctx, z);
    Vec out(z.size());
    for (int i = 0; i < ctx->l; ++i) out.segment(i * ctx->n, ctx->n) = e.new_mean[i];
    out.tail(ctx->l) = e.new_weight;
    return out;
  };
  m.jacobian_fn = [ctx](const Vec& z) {
    const int l = ctx->l, n = ctx->n;
    const GsTransitionEval e = evaluate(*ctx, z);
    Mat J = Mat::Zero(z.size(), z.size());
    for (int i = 0; i < l; ++i) {
      const Mat F = ctx->f.jacobian(Vec(z.segment(i * n, n)));
      const Mat HF = ctx->h.jacobian(e.fx[i]) * F;
      J.block(i * n, i * n, n, n) = F - ctx->K[i] * HF;
      // d log l_i / d xbar_i
      const Eigen::RowVectorXd dlog = (ctx->Sinv[i] * e.r[i]).transpose() * HF;
      for (int q = 0; q < l; ++q)
        J.block(l * n + q, i * n, 1, n) = ((q == i ? 1.0 : 0.0) - e.new_weight(q)) * e.new_weight(i) * dlog;
    }
    for (int q = 0; q < l; ++q)
      for (int i = 0; i < l; ++i)
        J(l * n + q, l * n + i) =
            ((q == i ? e.scaled_lik[q] : 0.0) - e.new_weight(q) * e.scaled_lik[i]) / e.normaliser;
    return J;
  };
  return m;
}

Mat igsekf_noise_jacobian(const SystemModel& model, const GsStepRecord& forward, const Vec& x_next, const Vec& z) {
  auto ctx = make_context(model, forward, x_next);
  const int l = ctx->l, n = ctx->n;
  const GsTransitionEval e = evaluate(*ctx, z);
  Mat V = Mat::Zero(z.size(), ctx->p);
  std::vector<Eigen::RowVectorXd> q(static_cast<size_t>(l));
  Eigen::RowVectorXd mix = Eigen::RowVectorXd::Zero(ctx->p);
  for (int i = 0; i < l; ++i) {
    V.block(i * n, 0, n, ctx->p) = ctx->K[i];
    q[i] = -(ctx->Sinv[i] * e.r[i]).transpose();
    mix += e.new_weight(i) * q[i];
  }
  for (int i = 0; i < l; ++i) V.row(l * n + i) = e.new_weight(i) * (q[i] - mix);
  return V;
}

DifferentiableMap igsekf_observation(const SystemModel& model, int l) {
  const int n = model.n;
  const DifferentiableMap g = model.g;
  auto combine = [l, n](const Vec& z) {
    Vec xs = Vec::Zero(n);
    for (int i = 0; i < l; ++i) xs += z(l * n + i) * z.segment(i * n, n);
    return xs;
  };
  DifferentiableMap m;
  m.in_dim = l * (n + 1);
  m.out_dim = model.na;
  m.eval = [g, combine](const Vec& z) { return g(combine(z)); };
  m.jacobian_fn = [g, combine, l, n](const Vec& z) {
    const Mat G = g.jacobian(combine(z));
    Mat J(G.rows(), z.size());
    for (int i = 0; i < l; ++i) {
      J.block(0, i * n, G.rows(), n) = z(l * n + i) * G;
      J.col(l * n + i) = G * z.segment(i * n, n);
    }
    return J;
  };
  return m;
}

GsBelief igsekf_forward_view(const AugmentedGsState& state) {
  Vec zhat = Vec::Zero(state.l * (state.n + 1));
  for (const GsComponent& c : state.mixture.components) zhat += c.weight * c.mean;
  zhat.tail(state.l) = project_weights(zhat.tail(state.l));
  return unpack_forward_mixture(zhat, state.l, state.n);
}

Vec igsekf_point_estimate(const AugmentedGsState& state) {
  const GsBelief view = igsekf_forward_view(state);
  Vec x = Vec::Zero(state.n);
  for (const GsComponent& c : view.components) x += c.weight * c.mean;
  return x;
}

IgsekfStep igsekf_step(const SystemModel& model, const AugmentedGsState& state, const GsReplica& replica,
                       const Vec& x_next, const Vec& a_next) {
  if (static_cast<int>(replica.state.components.size()) != state.l)
    throw std::invalid_argument("replica component count differs from the augmented state");
  GsBelief view = igsekf_forward_view(state);
  for (int i = 0; i < state.l; ++i) view.components[i].cov = replica.state.components[i].cov;

  IgsekfStep out;
  out.forward = gsekf_gain_step(model, view);
  out.replica.state = out.forward.updated;

  SystemModel im;
  im.id = model.id + "-gs-inverse";
  im.n = state.l * (state.n + 1);
  im.p = im.na = model.na;
  im.f = igsekf_transition(model, out.forward, x_next);
  im.h = im.g = igsekf_observation(model, state.l);
  im.R = im.Sigma_eps = model.Sigma_eps;

  out.state.l = state.l;
  out.state.n = state.n;
  std::vector<double> log_w;
  for (const GsComponent& c : state.mixture.components) {
    const Mat V = igsekf_noise_jacobian(model, out.forward, x_next, c.mean);
    im.Q = V * model.R * V.transpose();
    StepRecord rec = ekf_step(im, {c.mean, c.cov}, a_next);
    Vec z = rec.updated.mean;
    z.tail(state.l) = project_weights(z.tail(state.l));
    const Vec innov = a_next - rec.predicted_observation;
    log_w.push_back((c.weight > 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity()) +
                    gaussian_logpdf(innov, Vec::Zero(innov.size()), rec.S));
    out.state.mixture.components.push_back({c.weight, z, rec.updated.cov});
  }
  std::vector<double> w;
  out.weights_underflowed = !normalize_log_weights(log_w, w);
  for (size_t j = 0; j < w.size(); ++j) out.state.mixture.components[j].weight = w[j];
  return out;
}

}  // namespace ifl
