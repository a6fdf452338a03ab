#include "ifl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace ifl {

std::string to_string(ForwardKind k) {
  switch (k) {
    case ForwardKind::ekf: return "ekf";
    case ForwardKind::soekf: return "soekf";
    case ForwardKind::gsekf: return "gsekf";
    case ForwardKind::dekf: return "dekf";
    case ForwardKind::rkhs: return "rkhs";
  }
  return "?";
}

ForwardKind parse_forward_kind(const std::string& s) {
  static const std::map<std::string, ForwardKind> names{{"ekf", ForwardKind::ekf},
                                                        {"soekf", ForwardKind::soekf},
                                                        {"gsekf", ForwardKind::gsekf},
                                                        {"dekf", ForwardKind::dekf},
                                                        {"rkhs", ForwardKind::rkhs}};
  auto it = names.find(s);
  if (it == names.end()) throw ConfigError("unknown forward filter '" + s + "'");
  return it->second;
}

InverseSpec parse_inverse_spec(const std::string& s) {
  InverseSpec spec;
  spec.name = s;
  if (s == "iekf") {
    spec.kind = InverseKind::iekf;
  } else if (s == "isoekf") {
    spec.kind = InverseKind::isoekf;
  } else if (s == "idekf1") {
    spec.kind = InverseKind::idekf_plain;
  } else if (s == "idekf2") {
    spec.kind = InverseKind::idekf_dithered;
  } else if (s == "irkhs") {
    spec.kind = InverseKind::irkhs;
  } else if (s.rfind("igsekf", 0) == 0 && s.size() > 6 &&
             std::all_of(s.begin() + 6, s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    spec.kind = InverseKind::igsekf;
    spec.components = std::stoi(s.substr(6));
    if (spec.components < 1) throw ConfigError("inverse mixture size must be positive in '" + s + "'");
  } else {
    throw ConfigError("unknown inverse filter '" + s + "'");
  }
  return spec;
}

ForwardKind assumed_forward(InverseKind k) {
  switch (k) {
    case InverseKind::iekf: return ForwardKind::ekf;
    case InverseKind::isoekf: return ForwardKind::soekf;
    case InverseKind::igsekf: return ForwardKind::gsekf;
    case InverseKind::idekf_plain:
    case InverseKind::idekf_dithered: return ForwardKind::dekf;
    case InverseKind::irkhs: return ForwardKind::rkhs;
  }
  return ForwardKind::ekf;
}

std::string Pairing::label() const { return inverse.name + "@" + to_string(truth); }

Pairing parse_pairing(const std::string& s) {
  const auto at = s.find('@');
  if (at == std::string::npos) throw ConfigError("pair '" + s + "' must be written <inverse>@<forward>");
  Pairing p;
  p.inverse = parse_inverse_spec(s.substr(0, at));
  p.truth = parse_forward_kind(s.substr(at + 1));
  return p;
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> ids{"fm-demod", "bearing", "rkhs-fm", "stability-sweep"};
  if (!ids.count(experiment)) throw ConfigError("unknown experiment '" + experiment + "'");
  if (experiment == "stability-sweep") {
    if (bounds_file.empty()) throw ConfigError("stability-sweep needs [stability] bounds_file");
    if (sweep_points < 1 || !(sweep_delta_hi >= sweep_delta_lo) || !(sweep_delta_lo > 0.0))
      throw ConfigError("stability sweep range is invalid");
    return;
  }
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (horizon < 2) throw ConfigError("horizon must be at least 2");
  if (workers < 0) throw ConfigError("workers must be non-negative");
  if (!(divergence_limit >= 0.0 && divergence_limit <= 1.0)) throw ConfigError("divergence_limit must lie in [0, 1]");
  if (!(divergence_magnitude > 0.0)) throw ConfigError("divergence_magnitude must be positive");
  if (!(rkhs_ridge >= 0.0)) throw ConfigError("rkhs ridge must be non-negative");
  if (gs_components < 1) throw ConfigError("gs_components must be at least 1");
  if (forward_cov0.size() == 0 || inverse_cov0.size() == 0) throw ConfigError("initial covariances are required");
  if ((forward_cov0.array() < 0.0).any() || (inverse_cov0.array() < 0.0).any())
    throw ConfigError("initial covariances must be non-negative");
  const bool bearing_like = experiment == "bearing";
  for (const auto& p : pairs) {
    if (p.inverse.kind == InverseKind::irkhs && experiment != "rkhs-fm")
      throw ConfigError("irkhs pairs need the rkhs-fm experiment");
    if (p.truth == ForwardKind::rkhs && experiment != "rkhs-fm")
      throw ConfigError("rkhs forward filter needs the rkhs-fm experiment");
    if ((p.truth == ForwardKind::dekf || p.inverse.kind == InverseKind::idekf_plain ||
         p.inverse.kind == InverseKind::idekf_dithered) && !bearing_like)
      throw ConfigError("dithered filters need the bearing experiment");
    if (p.inverse.kind == InverseKind::idekf_plain || p.inverse.kind == InverseKind::idekf_dithered) {
      if (p.truth != ForwardKind::dekf) throw ConfigError("I-DEKF pairs must run on the dekf forward filter");
    }
  }
  forward_kernel.validate();
  inverse_kernel.validate();
  if (dither.d0 < 0.0 || !(dither.tau > 0.0) || dither.transient_steps < 0) throw ConfigError("dither schedule is invalid");
}

namespace {

Vec vec_of(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  c.forward_kernel = {30.0, DictionaryPolicy::sliding_window, 2, 0.1};
  c.inverse_kernel = {50.0, DictionaryPolicy::ald, 2, 0.1};
  c.rkhs_forward_cov0 = vec_of({10.0});
  c.rkhs_inverse_cov0 = vec_of({5.0});
  c.rkhs_q0 = vec_of({1.0, 10.0});
  c.rkhs_r0 = vec_of({5.0});
  if (experiment == "fm-demod") {
    c.runs = 500;
    c.horizon = 100;
    c.forward = {ForwardKind::ekf, ForwardKind::soekf, ForwardKind::gsekf};
    for (const char* s : {"iekf@ekf", "isoekf@soekf", "igsekf2@gsekf", "igsekf5@gsekf", "iekf@soekf", "isoekf@ekf",
                          "iekf@gsekf", "igsekf5@ekf"})
      c.pairs.push_back(parse_pairing(s));
    c.forward_cov0 = vec_of({10.0});
    c.inverse_cov0 = vec_of({5.0});
  } else if (experiment == "bearing") {
    c.runs = 400;
    c.horizon = 200;
    c.forward = {ForwardKind::ekf, ForwardKind::dekf};
    for (const char* s : {"iekf@ekf", "idekf1@dekf", "idekf2@dekf"}) c.pairs.push_back(parse_pairing(s));
    c.forward_cov0 = vec_of({4.44e-7, 0.5e-6, 1.0, 0.1});
    c.inverse_cov0 = vec_of({1e-6, 6e-7, 5.0, 0.5});
    c.inverse_init = {0.0, 0.002, 200.0, 2.0};
    c.j0_verbatim = true;
    c.dither = {0.5, 20.0, 80};
  } else if (experiment == "rkhs-fm") {
    c.runs = 500;
    c.horizon = 100;
    c.forward = {ForwardKind::ekf, ForwardKind::rkhs};
    for (const char* s : {"iekf@ekf", "iekf@rkhs", "irkhs@rkhs", "irkhs@ekf"}) c.pairs.push_back(parse_pairing(s));
    c.forward_cov0 = vec_of({10.0});
    c.inverse_cov0 = vec_of({5.0});
    c.bounds = false;
  } else if (experiment == "stability-sweep") {
    c.runs = 1;
    c.forward_cov0 = vec_of({1.0});
    c.inverse_cov0 = vec_of({1.0});
  } else {
    throw ConfigError("unknown experiment '" + experiment + "'");
  }
  return c;
}

namespace {

using boost::property_tree::ptree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> list_of(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double number(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (trim(v.substr(used)).empty()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
}

int integer(const std::string& key, const std::string& v) {
  const double d = number(key, v);
  if (d != static_cast<double>(static_cast<long long>(d))) throw ConfigError("'" + key + "' expects an integer");
  return static_cast<int>(d);
}

bool boolean(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true or false");
}

Vec vector_of(const std::string& key, const std::string& v) {
  const auto items = list_of(v);
  if (items.empty()) throw ConfigError("'" + key + "' expects a comma-separated list of numbers");
  Vec out(static_cast<Eigen::Index>(items.size()));
  for (size_t i = 0; i < items.size(); ++i) out(static_cast<Eigen::Index>(i)) = number(key, items[i]);
  return out;
}

DictionaryPolicy policy_of(const std::string& key, const std::string& v) {
  if (v == "sliding_window" || v == "window") return DictionaryPolicy::sliding_window;
  if (v == "ald") return DictionaryPolicy::ald;
  throw ConfigError("'" + key + "' expects sliding_window or ald");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
  ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  auto exp = tree.get_child_optional("experiment");
  if (!exp || !exp->get_optional<std::string>("id")) throw ConfigError("config needs [experiment] id");
  ExperimentConfig c = default_config(trim(exp->get<std::string>("id")));

  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, std::map<std::string, Setter>> table{
      {"experiment",
       {{"id", [](auto&, auto&) {}},
        {"runs", [&](auto& k, auto& v) { c.runs = integer(k, v); }},
        {"horizon", [&](auto& k, auto& v) { c.horizon = integer(k, v); }},
        {"seed",
         [&](auto& k, auto& v) {
           const double d = number(k, v);
           if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d))) throw ConfigError("seed must be a non-negative integer");
           c.seed = static_cast<std::uint64_t>(d);
         }},
        {"workers", [&](auto& k, auto& v) { c.workers = integer(k, v); }},
        {"output_dir",
         [&](auto&, auto& v) {
           std::filesystem::path p(v);
           c.output_dir = p.is_absolute() ? v : (std::filesystem::path(base_dir) / p).string();
         }},
        {"divergence_limit", [&](auto& k, auto& v) { c.divergence_limit = number(k, v); }},
        {"divergence_magnitude", [&](auto& k, auto& v) { c.divergence_magnitude = number(k, v); }}}},
      {"model",
       {{"transition",
         [&](auto& k, auto& v) {
           if (v == "printed") c.fm.printed_transition = true;
           else if (v == "corrected") c.fm.printed_transition = false;
           else throw ConfigError("'" + k + "' expects printed or corrected");
         }},
        {"T", [&](auto& k, auto& v) { c.fm.T = number(k, v); }},
        {"beta", [&](auto& k, auto& v) { c.fm.beta = number(k, v); }},
        {"fm_w_var", [&](auto& k, auto& v) { c.fm.w_var = number(k, v); }},
        {"fm_eps_var", [&](auto& k, auto& v) { c.fm.eps_var = number(k, v); }},
        {"dt", [&](auto& k, auto& v) { c.bearing.dt = number(k, v); }},
        {"Y", [&](auto& k, auto& v) { c.bearing.Y = number(k, v); }},
        {"bearing_w_var", [&](auto& k, auto& v) { c.bearing.w_var = number(k, v); }},
        {"bearing_v_var", [&](auto& k, auto& v) { c.bearing.v_var = number(k, v); }},
        {"bearing_eps_var", [&](auto& k, auto& v) { c.bearing.eps_var = number(k, v); }}}},
      {"forward",
       {{"filters",
         [&](auto&, auto& v) {
           c.forward.clear();
           for (const auto& s : list_of(v)) c.forward.push_back(parse_forward_kind(s));
         }},
        {"cov0", [&](auto& k, auto& v) { c.forward_cov0 = vector_of(k, v); }},
        {"gs_components", [&](auto& k, auto& v) { c.gs_components = integer(k, v); }}}},
      {"inverse",
       {{"pairs",
         [&](auto&, auto& v) {
           c.pairs.clear();
           for (const auto& s : list_of(v)) c.pairs.push_back(parse_pairing(s));
         }},
        {"cov0", [&](auto& k, auto& v) { c.inverse_cov0 = vector_of(k, v); }},
        {"init",
         [&](auto& k, auto& v) {
           if (v == "random") {
             c.inverse_init.clear();
           } else {
             const Vec x = vector_of(k, v);
             c.inverse_init.assign(x.data(), x.data() + x.size());
           }
         }},
        {"gs_perturb", [&](auto& k, auto& v) { c.gs_perturb = number(k, v); }},
        {"gs_init",
         [&](auto& k, auto& v) {
           if (v == "independent") c.gs_init = GsInit::independent;
           else if (v == "perturbed") c.gs_init = GsInit::perturbed;
           else throw ConfigError("'" + k + "' expects independent or perturbed");
         }}}},
      {"bounds",
       {{"enabled", [&](auto& k, auto& v) { c.bounds = boolean(k, v); }},
        {"j0",
         [&](auto& k, auto& v) {
           if (v == "verbatim") c.j0_verbatim = true;
           else if (v == "inverse") c.j0_verbatim = false;
           else throw ConfigError("'" + k + "' expects verbatim or inverse");
         }}}},
      {"dither",
       {{"d0", [&](auto& k, auto& v) { c.dither.d0 = number(k, v); }},
        {"tau", [&](auto& k, auto& v) { c.dither.tau = number(k, v); }},
        {"transient_steps", [&](auto& k, auto& v) { c.dither.transient_steps = integer(k, v); }}}},
      {"rkhs",
       {{"forward_sigma2", [&](auto& k, auto& v) { c.forward_kernel.sigma2 = number(k, v); }},
        {"forward_policy", [&](auto& k, auto& v) { c.forward_kernel.policy = policy_of(k, v); }},
        {"forward_window", [&](auto& k, auto& v) { c.forward_kernel.window = integer(k, v); }},
        {"forward_ald_threshold", [&](auto& k, auto& v) { c.forward_kernel.ald_threshold = number(k, v); }},
        {"inverse_sigma2", [&](auto& k, auto& v) { c.inverse_kernel.sigma2 = number(k, v); }},
        {"inverse_policy", [&](auto& k, auto& v) { c.inverse_kernel.policy = policy_of(k, v); }},
        {"inverse_window", [&](auto& k, auto& v) { c.inverse_kernel.window = integer(k, v); }},
        {"inverse_ald_threshold", [&](auto& k, auto& v) { c.inverse_kernel.ald_threshold = number(k, v); }},
        {"forward_cov0", [&](auto& k, auto& v) { c.rkhs_forward_cov0 = vector_of(k, v); }},
        {"inverse_cov0", [&](auto& k, auto& v) { c.rkhs_inverse_cov0 = vector_of(k, v); }},
        {"q0", [&](auto& k, auto& v) { c.rkhs_q0 = vector_of(k, v); }},
        {"r0", [&](auto& k, auto& v) { c.rkhs_r0 = vector_of(k, v); }},
        {"ridge", [&](auto& k, auto& v) { c.rkhs_ridge = number(k, v); }},
        {"moments",
         [&](auto& k, auto& v) {
           if (v == "observed") c.moments = ObservationMoments::observed;
           else if (v == "substitution") c.moments = ObservationMoments::model_substitution;
           else throw ConfigError("'" + k + "' expects observed or substitution");
         }}}},
      {"stability",
       {{"bounds_file",
         [&](auto&, auto& v) {
           std::filesystem::path p(v);
           c.bounds_file = p.is_absolute() ? v : (std::filesystem::path(base_dir) / p).string();
         }},
        {"delta_lo", [&](auto& k, auto& v) { c.sweep_delta_lo = number(k, v); }},
        {"delta_hi", [&](auto& k, auto& v) { c.sweep_delta_hi = number(k, v); }},
        {"points", [&](auto& k, auto& v) { c.sweep_points = integer(k, v); }},
        {"kappa_phi", [&](auto& k, auto& v) { c.kappa_phi = number(k, v); }},
        {"eps_phi", [&](auto& k, auto& v) { c.eps_phi = number(k, v); }},
        {"kappa_chi", [&](auto& k, auto& v) { c.kappa_chi = number(k, v); }},
        {"eps_chi", [&](auto& k, auto& v) { c.eps_chi = number(k, v); }}}}};

  for (const auto& [section, body] : tree) {
    auto st = table.find(section);
    if (st == table.end()) {
      if (body.empty()) throw ConfigError("key '" + section + "' must sit inside a section");
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      auto setter = st->second.find(key);
      if (setter == st->second.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      setter->second(section + "." + key, trim(value.data()));
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  const auto parent = std::filesystem::path(path).parent_path();
  return parse_config(ss.str(), parent.empty() ? "." : parent.string());
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("IFL_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w > 0) return w;
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

}  // namespace ifl
