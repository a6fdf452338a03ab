#include "helpers.hpp"
#include "oracles.hpp"

#include "ifl/inverse_filters.hpp"

#include <doctest.h>

#include <cmath>

using namespace ifl;
using namespace testing_support;

namespace {

SystemModel corrected_fm() {
  FmDemodParams p;
  p.printed_transition = false;
  return fm_demod_model(p);
}

SystemModel without_noise(SystemModel m) {
  m.Q.setZero();
  m.R.setZero();
  m.Sigma_eps.setZero();
  return m;
}

bool psd_order(const Mat& lo, const Mat& hi) {
  const Mat d = 0.5 * ((hi - lo) + (hi - lo).transpose());
  const double scale = std::max(1.0, hi.cwiseAbs().maxCoeff());
  return Eigen::SelfAdjointEigenSolver<Mat>(d).eigenvalues().minCoeff() >= -1e-10 * scale;
}

}  // namespace

TEST_CASE("I-EKF on a linear system equals the linear inverse Kalman filter") {
  const auto L = oracle::random_linear_system(31);
  const SystemModel m = make_linear_model(L.A, L.C, L.G, L.Q, L.R, L.Se);
  RngStream rng(1);
  const Trajectory t = simulate(m, Vec::Ones(2), 100, rng);
  GaussianBelief fwd{Vec::Zero(2), Mat::Identity(2, 2)};
  std::vector<Vec> est;
  for (const Vec& y : t.observations) {
    fwd = ekf_step(m, fwd, y).updated;
    est.push_back(fwd.mean);
  }
  const auto acts = emit_actions(m, est, rng);

  InverseBelief inv{Vec::Constant(2, 0.5), 2.0 * Mat::Identity(2, 2)};
  ForwardReplica rep{{Vec::Zero(2), Mat::Identity(2, 2)}};
  oracle::InverseKf o{{inv.mean, inv.cov}, Mat::Identity(2, 2)};
  double dev = 0.0;
  for (int k = 0; k < 100; ++k) {
    const InverseStep s = iekf_step(m, inv, rep, t.states[k + 1], acts[k]);
    CHECK(psd_order(s.belief.cov, s.inverse.predicted.cov));
    inv = s.belief;
    rep = s.replica;
    o = oracle::ikf_step(o, L.A, L.C, L.G, L.Q, L.R, L.Se, t.states[k + 1], acts[k]);
    dev = std::max({dev, max_abs(inv.mean - o.est.x), max_abs(inv.cov - o.est.P)});
  }
  CHECK(dev <= 1e-10);
}

TEST_CASE("I-EKF with uninformative actions keeps its prediction") {
  SystemModel m = corrected_fm();
  m.Sigma_eps = scalar_mat(1e14);
  const InverseStep s = iekf_step(m, {vec({0.3, 0.2}), Mat::Identity(2, 2)}, {{vec({0.3, 0.2}), Mat::Identity(2, 2)}},
                                  vec({0.5, 0.1}), scalar(3.0));
  CHECK(max_abs(s.belief.mean - s.inverse.predicted.mean) < 1e-10);
  CHECK(max_abs(s.belief.cov - s.inverse.predicted.cov) < 1e-10);
}

TEST_CASE("I-SOEKF reduces to the I-EKF without curvature") {
  const auto L = oracle::random_linear_system(12);
  const SystemModel m = make_linear_model(L.A, L.C, L.G, L.Q, L.R, L.Se);
  RngStream rng(2);
  const Trajectory t = simulate(m, Vec::Ones(2), 40, rng);
  InverseBelief a{Vec::Zero(2), Mat::Identity(2, 2)}, b = a;
  ForwardReplica ra{{Vec::Zero(2), Mat::Identity(2, 2)}}, rb = ra;
  double dev = 0.0;
  for (int k = 0; k < 40; ++k) {
    const Vec act = L.G * t.states[k + 1] * 0.9;
    const InverseStep sa = iekf_step(m, a, ra, t.states[k + 1], act);
    const InverseStep sb = isoekf_step(m, b, rb, t.states[k + 1], act);
    a = sa.belief, ra = sa.replica, b = sb.belief, rb = sb.replica;
    dev = std::max({dev, max_abs(a.mean - b.mean), max_abs(a.cov - b.cov)});
  }
  CHECK(dev <= 1e-12);
}

TEST_CASE("I-SOEKF action prediction for a squared action map") {
  const SystemModel m = corrected_fm();
  const InverseBelief inv{vec({0.8, 0.4}), (Mat(2, 2) << 0.5, 0.1, 0.1, 0.7).finished()};
  const InverseStep s = isoekf_step(m, inv, {{inv.mean, Mat::Identity(2, 2)}}, vec({0.9, 0.3}), scalar(0.7));
  const Vec& mu = s.inverse.predicted.mean;
  CHECK(std::abs(s.inverse.predicted_observation(0) - (mu(0) * mu(0) + s.inverse.predicted.cov(0, 0))) <= 1e-12);
}

TEST_CASE("I-SOEKF innovation covariance with a degenerate prediction") {
  SystemModel m = scalar_model(identity1(), identity1(), 1.0, 0.0, 5.0);
  m.g = square1();
  const InverseStep s = isoekf_step(m, {scalar(0.4), scalar_mat(0.0)}, {{scalar(0.4), scalar_mat(1.0)}}, scalar(1.0),
                                    scalar(0.3));
  CHECK(s.inverse.predicted.cov(0, 0) == 0.0);
  CHECK(s.inverse.S(0, 0) == 5.0);
}

TEST_CASE("one-step I-SOEKF") {
  SUBCASE("linear system equals the linear one-step inverse filter") {
    const auto L = oracle::random_linear_system(44);
    const SystemModel m = make_linear_model(L.A, L.C, L.G, L.Q, L.R, L.Se);
    RngStream rng(3);
    const Trajectory t = simulate(m, Vec::Ones(2), 100, rng);
    // forward one-step estimates xh_0..xh_100
    GaussianBelief fwd{Vec::Zero(2), Mat::Identity(2, 2)};
    std::vector<Vec> est{fwd.mean};
    for (int k = 0; k < 100; ++k) {
      fwd = soekf_one_step(m, fwd, m.h(t.states[k]) + (t.observations[k] - m.h(t.states[k + 1]))).updated;
      est.push_back(fwd.mean);
    }
    const auto acts = emit_actions(m, est, rng);
    InverseBelief inv{Vec::Constant(2, -0.2), Mat::Identity(2, 2)};
    ForwardReplica rep{{Vec::Zero(2), Mat::Identity(2, 2)}};
    oracle::InverseKf o{{inv.mean, inv.cov}, Mat::Identity(2, 2)};
    double dev = 0.0;
    for (int k = 0; k < 100; ++k) {
      const InverseStep s = isoekf_one_step(m, inv, rep, t.states[k], acts[k]);
      inv = s.belief;
      rep = s.replica;
      o = oracle::ikf_one_step(o, L.A, L.C, L.G, L.Q, L.R, L.Se, t.states[k], acts[k]);
      dev = std::max({dev, max_abs(inv.mean - o.est.x), max_abs(inv.cov - o.est.P)});
    }
    CHECK(dev <= 1e-10);
  }
  SUBCASE("zero gain leaves the corrected transition") {
    const SystemModel m = corrected_fm();
    const SecondOrderTerms t{Mat::Zero(2, 2), vec({0.01, -0.02}), vec({0.3, 0.3})};
    const DifferentiableMap fb = isoekf_one_step_transition(m, t, vec({1.0, 2.0}));
    const Vec x = vec({0.4, -1.2});
    CHECK(max_abs(fb(x) - (m.f(x) + t.f_correction)) <= 1e-15);
  }
  SUBCASE("transition Jacobian is F - K H") {
    const SystemModel m = corrected_fm();
    const SecondOrderTerms t{(Mat(2, 2) << 0.1, 0.2, -0.3, 0.4).finished(), vec({0.01, 0.0}), vec({0.0, 0.1})};
    const DifferentiableMap fb = isoekf_one_step_transition(m, t, vec({1.0, 2.0}));
    const Vec x = vec({0.4, -1.2});
    const Mat expect = m.f.jacobian(x) - t.K * m.h.jacobian(x);
    CHECK(max_abs(fb.jacobian(x) - expect) <= 1e-14);
    CHECK(max_abs(jacobian(fb.eval, x) - expect) <= 1e-5);
    const auto H = fb.hessians(x);
    for (int i = 0; i < 2; ++i) CHECK(max_abs(H[i] - hessian_component(fb.eval, i, x)) <= 1e-4);
  }
}

TEST_CASE("two-step I-SOEKF transition derivatives match finite differences") {
  // curved transition so every chain-rule term is active
  SystemModel m = corrected_fm();
  m.f.eval = [](const Vec& x) { return vec({0.9 * x(0) + 0.1 * x(0) * x(1), x(1) - 0.5 * x(0) * x(0)}); };
  m.f.jacobian_fn = nullptr;
  m.f.hessians_fn = nullptr;
  const SecondOrderTerms t{(Mat(2, 2) << 0.2, -0.1, 0.05, 0.3).finished(), vec({0.02, -0.01}), vec({0.1, 0.0})};
  const DifferentiableMap tr = isoekf_transition(m, t, vec({0.5, 0.7}));
  const Vec x = vec({0.3, 0.8});
  CHECK(max_abs(tr.jacobian(x) - jacobian(tr.eval, x)) <= 1e-6);
  const auto H = tr.hessians(x);
  for (int i = 0; i < 2; ++i) CHECK(max_abs(H[i] - hessian_component(tr.eval, i, x)) <= 1e-4);
}

TEST_CASE("noise-free chains are reproduced exactly") {
  const SystemModel m = corrected_fm();
  const SystemModel quiet = without_noise(m);
  RngStream rng(6);
  const Vec x0 = vec({0.7, 0.2});
  const Trajectory t = simulate(quiet, x0, 50, rng);
  const GaussianBelief b0{vec({0.5, 0.0}), Mat::Identity(2, 2)};

  SUBCASE("I-EKF") {
    GaussianBelief fwd = b0, inv = b0;
    ForwardReplica rep{b0};
    for (int k = 0; k < 50; ++k) {
      fwd = ekf_step(m, fwd, t.observations[k]).updated;
      const InverseStep s = iekf_step(m, inv, rep, t.states[k + 1], quiet.g(fwd.mean));
      inv = s.belief;
      rep = s.replica;
      CHECK(max_abs(inv.mean - fwd.mean) <= 1e-9);
    }
  }
  // second-order inverses add a covariance-driven mean correction, so they only track exactly
  // when the actions pin the estimate
  SystemModel pinned = m;
  pinned.g = linear_map(Mat::Identity(2, 2));
  pinned.Sigma_eps = 1e-16 * Mat::Identity(2, 2);
  SUBCASE("I-SOEKF") {
    GaussianBelief fwd = b0, inv = b0;
    ForwardReplica rep{b0};
    for (int k = 0; k < 50; ++k) {
      fwd = soekf_step(m, fwd, t.observations[k]).updated;
      const InverseStep s = isoekf_step(pinned, inv, rep, t.states[k + 1], fwd.mean);
      inv = s.belief;
      rep = s.replica;
      CHECK(max_abs(inv.mean - fwd.mean) <= 1e-9);
    }
  }
  SUBCASE("one-step I-SOEKF") {
    GaussianBelief fwd = b0, inv = b0;
    ForwardReplica rep{b0};
    for (int k = 0; k < 50; ++k) {
      const Vec yk = quiet.h(t.states[k]);
      const Vec ak = fwd.mean;
      fwd = soekf_one_step(m, fwd, yk).updated;
      const InverseStep s = isoekf_one_step(pinned, inv, rep, t.states[k], ak);
      inv = s.belief;
      rep = s.replica;
      CHECK(max_abs(inv.mean - fwd.mean) <= 1e-9);
    }
  }
  SUBCASE("I-DEKF aware of the dither") {
    const DitherSchedule ds{0.5, 20.0, 30};
    GaussianBelief fwd = b0, inv = b0;
    ForwardReplica rep{b0};
    for (int k = 0; k < 50; ++k) {
      fwd = dekf_step(m, ds, k + 1, fwd, t.observations[k]).updated;
      const InverseStep s =
          idekf_step(m, ds, k + 1, inv, rep, t.states[k + 1], quiet.g(fwd.mean), DitherAwareness::with_dither);
      inv = s.belief;
      rep = s.replica;
      CHECK(max_abs(inv.mean - fwd.mean) <= 1e-9);
    }
  }
  SUBCASE("I-GS-EKF") {
    GsBelief fwd{{{0.4, vec({0.5, 0.0}), Mat::Identity(2, 2)}, {0.6, vec({0.9, 0.3}), 0.5 * Mat::Identity(2, 2)}}};
    RngStream init(1);
    AugmentedGsState inv = igsekf_init(fwd, 1, Mat::Identity(6, 6), init);
    GsReplica rep{fwd};
    for (int k = 0; k < 50; ++k) {
      fwd = gsekf_step(m, fwd, t.observations[k]).updated;
      const Vec xh = gsekf_point_estimate(fwd).mean;
      const IgsekfStep s = igsekf_step(m, inv, rep, t.states[k + 1], quiet.g(xh));
      inv = s.state;
      rep = s.replica;
      CHECK(max_abs(igsekf_point_estimate(inv) - xh) <= 1e-9);
    }
  }
}

TEST_CASE("replica gains are a deterministic function of the inputs") {
  const SystemModel m = corrected_fm();
  auto run = [&]() {
    InverseBelief inv{vec({0.1, 0.1}), Mat::Identity(2, 2)};
    ForwardReplica rep{inv};
    std::vector<Mat> gains;
    for (int k = 0; k < 20; ++k) {
      const InverseStep s = iekf_step(m, inv, rep, vec({0.5, 0.1 * k}), scalar(0.3));
      gains.push_back(s.forward.K);
      inv = s.belief;
      rep = s.replica;
    }
    return gains;
  };
  CHECK(run() == run());
}

TEST_CASE("I-DEKF variants") {
  const SystemModel br = bearing_model();
  const DitherSchedule ds{0.5, 20.0, 80};
  const Vec x0 = vec({0.0, 0.002, 200.0, 2.0});
  const GaussianBelief b{x0 + vec({0.1, 0.0, 1.0, -0.2}), Mat::Identity(4, 4)};
  auto both = [&](const SystemModel& m, int k) {
    const InverseStep a = idekf_step(m, ds, k, b, {b}, x0, scalar(4.1), DitherAwareness::with_dither);
    const InverseStep c = idekf_step(m, ds, k, b, {b}, x0, scalar(4.1), DitherAwareness::without_dither);
    return max_abs(a.belief.mean - c.belief.mean) + max_abs(a.belief.cov - c.belief.cov);
  };
  CHECK(both(br, 80) == 0.0);
  CHECK(both(br, 120) == 0.0);
  CHECK(both(br, 3) > 0.0);

  SystemModel lin = make_linear_model(Mat::Identity(2, 2), Mat::Identity(2, 2), Mat::Identity(1, 2),
                                      Mat::Identity(2, 2), Mat::Identity(2, 2), Mat::Identity(1, 1));
  const GaussianBelief bl{vec({0.2, 0.3}), Mat::Identity(2, 2)};
  for (int k = 0; k < 80; k += 7) {
    const InverseStep a = idekf_step(lin, ds, k, bl, {bl}, vec({1.0, 1.0}), scalar(0.4), DitherAwareness::with_dither);
    const InverseStep c =
        idekf_step(lin, ds, k, bl, {bl}, vec({1.0, 1.0}), scalar(0.4), DitherAwareness::without_dither);
    CHECK(max_abs(a.belief.mean - c.belief.mean) <= 1e-14);
  }
}

TEST_CASE("Gaussian-sum inverse") {
  const SystemModel m = corrected_fm();
  const GsBelief fwd{{{0.3, vec({0.5, 0.2}), Mat::Identity(2, 2)}, {0.7, vec({-0.4, 1.0}), 0.4 * Mat::Identity(2, 2)}}};
  const GsStepRecord rec = gsekf_gain_step(m, fwd);
  const Vec x_next = vec({0.6, 0.4});

  // transition written out directly from the mixture update
  auto oracle_transition = [&](const Vec& z, const Vec& v) {
    Vec out(6);
    double total = 0.0;
    Vec lik(2);
    for (int i = 0; i < 2; ++i) {
      const Vec fx = m.f(Vec(z.segment(2 * i, 2)));
      const Vec r = m.h(x_next) + v - m.h(fx);
      out.segment(2 * i, 2) = fx + rec.components[i].K * r;
      const Mat& S = rec.components[i].S;
      lik(i) = z(4 + i) * std::exp(-0.5 * r.dot(S.inverse() * r)) / std::sqrt(S.determinant());
      total += lik(i);
    }
    out.tail(2) = lik / total;
    return out;
  };

  const Vec z = vec({0.4, 0.1, -0.3, 0.9, 0.35, 0.65});
  const DifferentiableMap tr = igsekf_transition(m, rec, x_next);
  CHECK(max_abs(tr(z) - oracle_transition(z, Vec::Zero(2))) <= 1e-12);
  CHECK(max_abs(tr.jacobian(z) - jacobian(tr.eval, z)) <= 1e-6);

  VecFn in_noise = [&](const Vec& v) { return oracle_transition(z, v); };
  CHECK(max_abs(igsekf_noise_jacobian(m, rec, x_next, z) - jacobian(in_noise, Vec::Zero(2))) <= 1e-6);

  SUBCASE("action map derivatives") {
    const DifferentiableMap g = igsekf_observation(m, 2);
    const Mat J = g.jacobian(z);
    const Vec xs = 0.35 * z.segment(0, 2) + 0.65 * z.segment(2, 2);
    const Mat G = m.g.jacobian(xs);
    CHECK(std::abs(J(0, 4) - (G * z.segment(0, 2))(0)) <= 1e-14);
    CHECK(std::abs(J(0, 5) - (G * z.segment(2, 2))(0)) <= 1e-14);
    CHECK(max_abs(J.block(0, 2, 1, 2) - 0.65 * G) <= 1e-14);
    CHECK(max_abs(J - jacobian(g.eval, z)) <= 1e-5);
  }
  SUBCASE("identical components keep their weights") {
    const GsBelief same{{{0.5, vec({0.5, 0.2}), Mat::Identity(2, 2)}, {0.5, vec({0.5, 0.2}), Mat::Identity(2, 2)}}};
    const GsStepRecord r2 = gsekf_gain_step(m, same);
    const Vec zs = vec({0.5, 0.2, 0.5, 0.2, 0.5, 0.5});
    const Vec out = igsekf_transition(m, r2, x_next)(zs);
    CHECK(std::abs(out(4) - 0.5) <= 1e-15);
    CHECK(std::abs(out(5) - 0.5) <= 1e-15);
  }
}

TEST_CASE("single-component Gaussian-sum inverse is the I-EKF") {
  const SystemModel m = corrected_fm();
  RngStream rng(2), init(3);
  const Trajectory t = simulate(m, vec({0.4, 0.0}), 30, rng);
  const GaussianBelief b0{vec({0.2, 0.1}), Mat::Identity(2, 2)};
  Mat cov0 = Mat::Zero(3, 3);
  cov0.topLeftCorner(2, 2) = 2.0 * Mat::Identity(2, 2);
  AugmentedGsState gs = igsekf_init(GsBelief{{{1.0, b0.mean, Mat()}}}, 1, cov0, init);
  GsReplica grep{{{{1.0, b0.mean, b0.cov}}}};
  InverseBelief inv{b0.mean, 2.0 * Mat::Identity(2, 2)};
  ForwardReplica rep{b0};
  double dev = 0.0;
  for (int k = 0; k < 30; ++k) {
    const Vec a = scalar(0.3 + 0.01 * k);
    const InverseStep s = iekf_step(m, inv, rep, t.states[k + 1], a);
    const IgsekfStep g = igsekf_step(m, gs, grep, t.states[k + 1], a);
    inv = s.belief, rep = s.replica, gs = g.state, grep = g.replica;
    CHECK(gs.mixture.components[0].mean(2) == 1.0);
    dev = std::max({dev, max_abs(igsekf_point_estimate(gs) - inv.mean),
                    max_abs(gs.mixture.components[0].cov.topLeftCorner(2, 2) - inv.cov)});
  }
  CHECK(dev <= 1e-10);
}

TEST_CASE("Gaussian-sum inverse point estimate") {
  AugmentedGsState s;
  s.l = 2;
  s.n = 1;
  s.mixture.components.push_back({1.0, vec({0.0, 2.0, 0.5, 0.5}), Mat::Identity(4, 4)});
  CHECK(igsekf_point_estimate(s)(0) == 1.0);

  AugmentedGsState t;
  t.l = 2;
  t.n = 2;
  t.mixture.components.push_back({1.0, vec({1.0, 0.0, 0.0, 1.0, 0.2, 0.8}), Mat::Identity(6, 6)});
  CHECK(max_abs(igsekf_point_estimate(t) - vec({0.2, 0.8})) <= 1e-15);

  AugmentedGsState one;
  one.l = 1;
  one.n = 2;
  one.mixture.components.push_back({1.0, vec({0.3, -0.6, 1.0}), Mat::Identity(3, 3)});
  CHECK(igsekf_point_estimate(one) == vec({0.3, -0.6}));
}

TEST_CASE("forward weight projection") {
  const Vec w = project_weights(vec({-0.2, 0.6, 1.4}));
  CHECK(w.sum() == doctest::Approx(1.0));
  CHECK(w.minCoeff() > 0.0);
  CHECK(w(2) == doctest::Approx(1.0 / 1.6).epsilon(1e-9));
  CHECK_THROWS_AS(project_weights(vec({std::nan(""), 0.5})), NumericalError);
}

TEST_CASE("Gaussian-sum inverse initialisation") {
  const GsBelief g{{{0.5, vec({0.0, 0.0}), Mat()}, {0.5, vec({1.0, 1.0}), Mat()}}};
  RngStream rng(4);
  const AugmentedGsState s = igsekf_init(g, 3, Mat::Identity(6, 6), rng);
  CHECK(s.mixture.components.size() == 3);
  for (const auto& c : s.mixture.components) {
    CHECK(c.weight == doctest::Approx(1.0 / 3.0));
    CHECK(c.mean.tail(2).sum() == doctest::Approx(1.0));
  }
  CHECK(s.mixture.components[0].mean != s.mixture.components[1].mean);
  CHECK_THROWS_AS(igsekf_init(g, 0, Mat::Identity(6, 6), rng), std::invalid_argument);
  CHECK_THROWS_AS(igsekf_init(g, 2, Mat::Identity(5, 5), rng), std::invalid_argument);
}
