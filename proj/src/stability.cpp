#include "ifl/stability.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace ifl {

Lemma2Constants lemma2_constants(const SoekfBounds& b) {
  const double n = b.n, p = b.p, s2 = b.sigma_hi * b.sigma_hi;
  Lemma2Constants c;
  c.f_cap = b.a_hi * b.a_hi * s2 * n * n;
  c.h_cap = b.b_hi * b.b_hi * s2 * n * p;
  c.beta = 0.5 * b.a_hi * b.b_hi * s2 * n * std::sqrt(n * p);
  return c;
}

namespace {

void require(std::vector<std::string>& out, bool ok, const std::string& what) {
  if (!ok) out.push_back(what);
}

std::vector<std::string> preconditions(const SoekfBounds& b) {
  std::vector<std::string> v;
  const double all[] = {b.f_bar, b.h_bar, b.f_inv, b.sigma_lo, b.sigma_hi, b.q_lo, b.r_lo, b.delta, b.a_lo,
                        b.a_hi, b.b_lo, b.b_hi, b.kappa_phi, b.eps_phi, b.kappa_chi, b.eps_chi};
  require(v, std::all_of(std::begin(all), std::end(all), [](double x) { return std::isfinite(x); }),
          "all bounds finite");
  require(v, b.n > 0, "n > 0");
  require(v, b.p > 0, "p > 0");
  require(v, b.sigma_lo > 0.0, "sigma_lo > 0");
  require(v, b.sigma_hi >= b.sigma_lo, "sigma_hi >= sigma_lo");
  require(v, b.r_lo > 0.0, "r_lo > 0");
  require(v, b.q_lo >= 0.0, "q_lo >= 0");
  require(v, b.delta > 0.0, "delta > 0");
  require(v, b.f_bar >= 0.0 && b.h_bar >= 0.0 && b.f_inv >= 0.0, "norm bounds non-negative");
  require(v, b.a_hi >= 0.0 && b.b_hi >= 0.0, "a_hi, b_hi >= 0");
  require(v, b.kappa_phi >= 0.0 && b.kappa_chi >= 0.0, "kappa_phi, kappa_chi >= 0");
  require(v, b.eps_phi > 0.0 && b.eps_chi > 0.0, "eps_phi, eps_chi > 0");
  return v;
}

}  // namespace

StabilityReport check_theorem1(const SoekfBounds& b) {
  StabilityReport r;
  r.violated_preconditions = preconditions(b);
  if (!r.violated_preconditions.empty()) return r;

  const double n = b.n, p = b.p;
  const double sh = b.sigma_hi, sl = b.sigma_lo;
  r.beta = lemma2_constants(b).beta;

  const double denom20 = b.h_bar * b.a_hi * b.b_hi * sh * sh * n * std::sqrt(n * p);
  r.eq20_bound = denom20 > 0.0 ? 2.0 * b.r_lo / denom20 : std::numeric_limits<double>::infinity();
  r.eq20 = b.f_inv < r.eq20_bound;

  const double gk = (b.f_bar * sh * b.h_bar + r.beta) / b.r_lo;  // gain bound
  const double fh = b.f_bar + b.h_bar * gk;
  r.c = 2.0 * b.f_bar * sh * b.h_bar * gk +
        (2.0 * sh * b.h_bar * b.h_bar + b.delta + 0.5 * b.b_hi * b.b_hi * sh * sh * n * p) * gk * gk;
  r.eq21 = b.q_lo > r.c;
  if (r.eq21) r.alpha = 1.0 - 1.0 / (1.0 + (b.q_lo - r.c) / (sh * fh * fh));

  r.kappa_prime = b.kappa_phi + b.kappa_chi * gk;
  r.eps_prime = std::min(b.eps_phi, b.eps_chi);
  const double kp = r.kappa_prime, ep = r.eps_prime;
  r.kappa_nonl = (kp / sl) * (2.0 * fh + kp * ep * ep);
  r.kappa_noise = n / sl + b.f_bar * b.f_bar * b.h_bar * b.h_bar * sh * sh * p / (sl * b.r_lo * b.r_lo);
  r.kappa_q = 0.5 * (b.a_hi * n + b.b_hi * p * gk);
  r.c_q = 0.5 * (b.a_hi * sh * n * n + b.b_hi * sh * n * p * gk);
  const double tail = 2.0 * fh + 2.0 * kp * ep * ep + r.kappa_q * ep;
  r.kappa_sec = (r.kappa_q / sl) * tail;
  r.c_sec = r.c_q * r.c_q / sl + r.kappa_q * r.c_q * ep * ep / sl + (r.c_q * ep / sl) * tail;

  if (r.alpha && *r.alpha > 0.0) {
    const double a = *r.alpha;
    const double denom = 2.0 * sh * (r.kappa_nonl * ep + r.kappa_sec);
    r.epsilon = denom > 0.0 ? std::min(ep, a / denom) : ep;
    r.epsilon_tilde = std::sqrt(2.0 * sh * (r.kappa_noise * b.delta + r.c_sec) / a);
    r.eq22 = *r.epsilon_tilde < *r.epsilon;
  }
  r.stable = r.eq20 && r.eq21 && r.eq22;
  return r;
}

SoekfBounds inverse_bounds(const SoekfBounds& b, const InverseBoundsExt& e) {
  const double beta = lemma2_constants(b).beta;
  const double gk = (b.f_bar * b.sigma_hi * b.h_bar + beta) / b.r_lo;
  SoekfBounds v;
  v.n = b.n;
  v.p = e.na;
  v.f_bar = b.f_bar + b.h_bar * gk;
  v.h_bar = e.g_bar;
  v.f_inv = e.f_inv_inverse;
  v.sigma_lo = e.m_lo;
  v.sigma_hi = e.m_hi;
  v.q_lo = e.q_lo_inverse;
  v.r_lo = e.eps_lo;
  v.delta = e.delta_bar;
  v.a_lo = b.a_lo - b.b_hi * std::sqrt(static_cast<double>(b.p)) * gk;
  v.a_hi = b.a_hi + std::abs(b.b_lo) * std::sqrt(static_cast<double>(b.p)) * gk;
  v.b_lo = e.c_lo;
  v.b_hi = e.c_hi;
  v.kappa_phi = b.kappa_phi + b.kappa_chi * gk;
  v.eps_phi = std::min(b.eps_phi, b.eps_chi);
  v.kappa_chi = e.kappa_chibar;
  v.eps_chi = e.eps_chibar;
  return v;
}

StabilityReport check_theorem2(const SoekfBounds& b, const InverseBoundsExt& ext) {
  StabilityReport fwd = check_theorem1(b);
  if (!fwd.stable) {
    fwd.forward_precondition_unmet = true;
    fwd.stable = false;
    return fwd;
  }
  std::vector<std::string> extra;
  require(extra, ext.na > 0, "na > 0");
  require(extra, ext.m_lo > 0.0 && ext.m_hi >= ext.m_lo, "0 < m_lo <= m_hi");
  require(extra, ext.eps_lo > 0.0, "eps_lo > 0");
  const SoekfBounds inv = inverse_bounds(b, ext);
  StabilityReport r = check_theorem1(inv);
  r.violated_preconditions.insert(r.violated_preconditions.end(), extra.begin(), extra.end());
  if (!extra.empty()) r.stable = false;
  r.d_lo = inv.a_lo;
  r.d_hi = inv.a_hi;
  return r;
}

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : "undefined"; }

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

}  // namespace

std::string StabilityReport::text() const {
  std::ostringstream os;
  os << "Second-order EKF stability check\n";
  if (forward_precondition_unmet) os << "  forward filter conditions unmet; inverse check not attempted\n";
  if (!violated_preconditions.empty()) {
    os << "  violated preconditions:\n";
    for (const auto& v : violated_preconditions) os << "    - " << v << "\n";
    os << "  verdict: FAIL\n";
    return os.str();
  }
  os << "  beta                  = " << num(beta) << "\n";
  os << "  transition-inverse bound: f_inv < " << num(eq20_bound) << "  " << verdict(eq20) << "\n";
  os << "  c(delta)              = " << num(c) << "\n";
  os << "  process noise bound:  q_lo > c  " << verdict(eq21) << "\n";
  os << "  alpha                 = " << opt(alpha) << "\n";
  os << "  kappa_nonl            = " << num(kappa_nonl) << "\n";
  os << "  kappa_noise           = " << num(kappa_noise) << "\n";
  os << "  kappa_sec, c_sec      = " << num(kappa_sec) << ", " << num(c_sec) << "\n";
  os << "  epsilon               = " << opt(epsilon) << "\n";
  os << "  epsilon_tilde(delta)  = " << opt(epsilon_tilde) << "\n";
  os << "  noise radius:  epsilon_tilde < epsilon  " << verdict(eq22) << "\n";
  if (d_lo != 0.0 || d_hi != 0.0) os << "  inverse Hessian bounds d_lo, d_hi = " << num(d_lo) << ", " << num(d_hi) << "\n";
  os << "  verdict: " << verdict(stable) << "\n";
  return os.str();
}

std::string StabilityReport::record() const {
  std::ostringstream os;
  os << "stable=" << (stable ? 1 : 0) << " eq20=" << (eq20 ? 1 : 0) << " eq21=" << (eq21 ? 1 : 0)
     << " eq22=" << (eq22 ? 1 : 0) << " forward_unmet=" << (forward_precondition_unmet ? 1 : 0)
     << " preconditions_violated=" << violated_preconditions.size() << " beta=" << num(beta)
     << " eq20_bound=" << num(eq20_bound) << " c=" << num(c) << " alpha=" << opt(alpha)
     << " kappa_nonl=" << num(kappa_nonl) << " kappa_noise=" << num(kappa_noise) << " kappa_sec=" << num(kappa_sec)
     << " c_sec=" << num(c_sec) << " epsilon=" << opt(epsilon) << " epsilon_tilde=" << opt(epsilon_tilde)
     << " d_lo=" << num(d_lo) << " d_hi=" << num(d_hi);
  return os.str();
}

namespace {

double two_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Mat>(m).singularValues()(0);
}

double sup_inflate(double v) { return v >= 0.0 ? v * 1.05 : v / 1.05; }
double inf_inflate(double v) { return v >= 0.0 ? v / 1.05 : v * 1.05; }

}  // namespace

SoekfBounds estimate_bounds_from_runs(const SystemModel& model, const std::vector<FilterTrace>& traces) {
  const double inf = std::numeric_limits<double>::infinity();
  double f_bar = 0, h_bar = 0, f_inv = 0, s_lo = inf, s_hi = -inf;
  double a_lo = inf, a_hi = -inf, b_lo = inf, b_hi = -inf;
  size_t samples = 0;
  for (const FilterTrace& t : traces) {
    if (t.estimates.size() != t.covariances.size())
      throw std::invalid_argument("trace holds different numbers of estimates and covariances");
    for (size_t k = 0; k < t.estimates.size(); ++k) {
      const Vec& x = t.estimates[k];
      const Mat F = model.f.jacobian(x);
      f_bar = std::max(f_bar, two_norm(F));
      const auto sv = Eigen::JacobiSVD<Mat>(F).singularValues();
      f_inv = std::max(f_inv, sv(sv.size() - 1) > 0.0 ? 1.0 / sv(sv.size() - 1) : inf);
      h_bar = std::max(h_bar, two_norm(model.h.jacobian(x)));
      const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(t.covariances[k], Eigen::EigenvaluesOnly).eigenvalues();
      s_lo = std::min(s_lo, ev.minCoeff());
      s_hi = std::max(s_hi, ev.maxCoeff());
      for (const Mat& Hf : model.f.hessians(x)) {
        const Vec e = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (Hf + Hf.transpose()), Eigen::EigenvaluesOnly).eigenvalues();
        a_lo = std::min(a_lo, e.minCoeff());
        a_hi = std::max(a_hi, e.maxCoeff());
      }
      for (const Mat& Hh : model.h.hessians(x)) {
        const Vec e = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (Hh + Hh.transpose()), Eigen::EigenvaluesOnly).eigenvalues();
        b_lo = std::min(b_lo, e.minCoeff());
        b_hi = std::max(b_hi, e.maxCoeff());
      }
      ++samples;
    }
  }
  if (samples == 0) throw std::invalid_argument("no trace samples to estimate bounds from");

  auto eig = [](const Mat& m) { return Eigen::SelfAdjointEigenSolver<Mat>(m, Eigen::EigenvaluesOnly).eigenvalues(); };
  const Vec eq = eig(model.Q), er = eig(model.R);

  SoekfBounds b;
  b.n = model.n;
  b.p = model.p;
  b.f_bar = sup_inflate(f_bar);
  b.h_bar = sup_inflate(h_bar);
  b.f_inv = sup_inflate(f_inv);
  b.sigma_lo = inf_inflate(s_lo);
  b.sigma_hi = sup_inflate(s_hi);
  b.q_lo = inf_inflate(std::max(eq.minCoeff(), 0.0));
  b.r_lo = inf_inflate(er.minCoeff());
  b.delta = sup_inflate(std::max(eq.maxCoeff(), er.maxCoeff()));
  b.a_lo = inf_inflate(a_lo);
  b.a_hi = sup_inflate(std::max(a_hi, 0.0));
  b.b_lo = inf_inflate(b_lo);
  b.b_hi = sup_inflate(std::max(b_hi, 0.0));
  return b;
}

SoekfBounds parse_bounds(const std::string& text, InverseBoundsExt* ext, bool* has_ext) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(std::string("malformed bounds file: ") + e.what());
  }
  auto section = [&](const char* name) -> const boost::property_tree::ptree* {
    auto it = tree.find(name);
    return it == tree.not_found() ? nullptr : &it->second;
  };
  const boost::property_tree::ptree* fwd = section("forward");
  if (!fwd) fwd = &tree;

  auto get = [](const boost::property_tree::ptree& t, const std::string& key, bool required) -> double {
    auto v = t.get_optional<std::string>(key);
    if (!v) {
      if (required) throw std::invalid_argument("bounds file is missing '" + key + "'");
      return 0.0;
    }
    try {
      size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return d;
    } catch (const std::exception&) {
      throw std::invalid_argument("bounds file value for '" + key + "' is not a number");
    }
  };

  SoekfBounds b;
  const std::pair<const char*, double*> fields[] = {
      {"f_bar", &b.f_bar},         {"h_bar", &b.h_bar},         {"f_inv", &b.f_inv},
      {"sigma_lo", &b.sigma_lo},   {"sigma_hi", &b.sigma_hi},   {"q_lo", &b.q_lo},
      {"r_lo", &b.r_lo},           {"delta", &b.delta},         {"a_lo", &b.a_lo},
      {"a_hi", &b.a_hi},           {"b_lo", &b.b_lo},           {"b_hi", &b.b_hi},
      {"kappa_phi", &b.kappa_phi}, {"eps_phi", &b.eps_phi},     {"kappa_chi", &b.kappa_chi},
      {"eps_chi", &b.eps_chi}};
  for (const auto& [key, dst] : fields) *dst = get(*fwd, key, true);
  b.n = static_cast<int>(get(*fwd, "n", true));
  b.p = static_cast<int>(get(*fwd, "p", true));

  const boost::property_tree::ptree* inv = section("inverse");
  if (has_ext) *has_ext = inv != nullptr;
  if (inv && ext) {
    const std::pair<const char*, double*> inv_fields[] = {
        {"g_bar", &ext->g_bar},           {"m_lo", &ext->m_lo},
        {"m_hi", &ext->m_hi},             {"eps_lo", &ext->eps_lo},
        {"delta_bar", &ext->delta_bar},   {"c_lo", &ext->c_lo},
        {"c_hi", &ext->c_hi},             {"kappa_chibar", &ext->kappa_chibar},
        {"eps_chibar", &ext->eps_chibar}, {"f_inv_inverse", &ext->f_inv_inverse},
        {"q_lo_inverse", &ext->q_lo_inverse}};
    for (const auto& [key, dst] : inv_fields) *dst = get(*inv, key, true);
    ext->na = static_cast<int>(get(*inv, "na", true));
  }
  return b;
}

}  // namespace ifl
