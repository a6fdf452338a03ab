#pragma once

#include "ifl/config.hpp"
#include "ifl/csv.hpp"
#include "ifl/stability.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ifl {

struct ExcludedRun {
  int run = 0;
  std::string reason;
};

struct ExperimentResult {
  std::string experiment;
  /// File stem and table, e.g. {"fig1_fm_demod", ...}.
  std::vector<std::pair<std::string, CurveTable>> figures;
  int runs_requested = 0;
  int runs_used = 0;
  std::vector<ExcludedRun> excluded;
  std::vector<std::string> notes;
  std::optional<StabilityReport> stability;

  double excluded_fraction() const;
  const CurveTable& figure(const std::string& stem) const;
};

/// AMSE(k) = sqrt(sum over runs and steps i <= k of |e_i|^2 / (runs n k)); errors[run][k-1] = e_k.
std::vector<double> compute_amse(const std::vector<std::vector<Vec>>& errors);

/// Column name of a forward curve, e.g. "fwd_ekf_amse".
std::string forward_curve_name(const ExperimentConfig& cfg, ForwardKind k);
/// Column name of a pairing curve, e.g. "inv_iekf_on_ekf_amse".
std::string pair_curve_name(const ExperimentConfig& cfg, const Pairing& p);

/// Monte-Carlo experiment. Each run draws from its own stream derived from (seed, run index),
/// so results do not depend on the worker count.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// CSV per figure, metadata.txt and, when present, stability_report.txt.
void write_outputs(const ExperimentResult& result, const ExperimentConfig& cfg);

std::string metadata_text(const ExperimentResult& result, const ExperimentConfig& cfg);

/// 0 success, 3 when the excluded fraction exceeds the configured limit.
int exit_code(const ExperimentResult& result, const ExperimentConfig& cfg);

}  // namespace ifl
