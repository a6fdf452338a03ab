#pragma once

#include "ifl/forward_filters.hpp"
#include "ifl/rkhs_ekf.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ifl {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// How the l_bar inverse Gaussian-sum components start: independent random
/// forward means per component, or perturbations of one random guess.
enum class GsInit { independent, perturbed };

enum class ForwardKind { ekf, soekf, gsekf, dekf, rkhs };

enum class InverseKind {
  iekf,
  isoekf,
  igsekf,
  idekf_plain,     ///< I-DEKF-1: plain h in the transition
  idekf_dithered,  ///< I-DEKF-2: dithered h in the transition
  irkhs,
};

std::string to_string(ForwardKind k);
ForwardKind parse_forward_kind(const std::string& s);

struct InverseSpec {
  InverseKind kind = InverseKind::iekf;
  int components = 1;  ///< inverse mixture size for igsekf
  std::string name;    ///< e.g. "igsekf5"
};

InverseSpec parse_inverse_spec(const std::string& s);
/// Forward filter the inverse assumes.
ForwardKind assumed_forward(InverseKind k);

/// An inverse filter run on the actions of a true forward filter, written "<inverse>@<forward>".
struct Pairing {
  ForwardKind truth = ForwardKind::ekf;
  InverseSpec inverse;
  std::string label() const;
  bool matched() const { return assumed_forward(inverse.kind) == truth; }
};

Pairing parse_pairing(const std::string& s);

struct ExperimentConfig {
  std::string experiment = "fm-demod";  ///< fm-demod | bearing | rkhs-fm | stability-sweep
  int runs = 500;
  int horizon = 100;
  std::uint64_t seed = 1;
  int workers = 0;  ///< 0: IFL_WORKERS or hardware concurrency
  std::string output_dir = ".";
  double divergence_limit = 0.2;
  /// A run whose estimates leave this magnitude is counted as divergent.
  double divergence_magnitude = 1e10;

  std::vector<ForwardKind> forward;
  std::vector<Pairing> pairs;

  FmDemodParams fm;
  BearingParams bearing;

  Vec forward_cov0;  ///< diagonal; size 1 broadcasts
  Vec inverse_cov0;
  std::vector<double> inverse_init;  ///< empty: random draw like the forward estimates
  int gs_components = 5;
  double gs_perturb = 0.1;
  GsInit gs_init = GsInit::independent;

  bool bounds = true;
  bool j0_verbatim = false;  ///< J_0 = Sigma_0 instead of Sigma_0^-1

  DitherSchedule dither;

  KernelSpec forward_kernel;
  KernelSpec inverse_kernel;
  Vec rkhs_forward_cov0;
  Vec rkhs_inverse_cov0;
  Vec rkhs_q0;
  Vec rkhs_r0;
  ObservationMoments moments = ObservationMoments::observed;
  double rkhs_ridge = 0.0;

  double kappa_phi = 0.0, eps_phi = 1.0, kappa_chi = 0.0, eps_chi = 1.0;

  std::string bounds_file;
  double sweep_delta_lo = 0.1, sweep_delta_hi = 10.0;
  int sweep_points = 50;

  void validate() const;
};

/// Defaults for one of the named experiments.
ExperimentConfig default_config(const std::string& experiment);

/// INI text with [experiment], [model], [forward], [inverse], [bounds], [dither], [rkhs], [stability].
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

/// Worker count: explicit value, else IFL_WORKERS, else hardware concurrency.
int resolve_workers(int requested);

}  // namespace ifl
