#pragma once

// Second transcription of the stability constants, kept apart from the library.

#include <cmath>
#include <optional>

namespace oracle {

struct StabilityInputs {
  double fb, hb, sl, sh, ql, rl, ab, bb, al, bl, delta;
  int n, p;
};

inline double beta(const StabilityInputs& s) { return 0.5 * s.ab * s.bb * s.sh * s.sh * s.n * std::sqrt(s.n * s.p); }

inline double c_const(const StabilityInputs& s) {
  const double b = beta(s);
  const double t = (s.fb * s.sh * s.hb + b) / s.rl;
  return 2.0 * s.fb * s.sh * s.hb * (s.fb * s.sh * s.hb + b) / s.rl +
         (2.0 * s.sh * s.hb * s.hb + s.delta + 0.5 * s.bb * s.bb * s.sh * s.sh * s.n * s.p) * t * t;
}

inline std::optional<double> alpha(const StabilityInputs& s) {
  const double c = c_const(s);
  if (!(s.ql > c)) return std::nullopt;
  const double b = beta(s);
  const double inner = s.fb + (s.fb * s.sh * s.hb * s.hb + b * s.hb) / s.rl;
  const double one_minus = 1.0 / (1.0 + (s.ql - c) / (s.sh * inner * inner));
  return 1.0 - one_minus;
}

inline double kappa_noise(const StabilityInputs& s) {
  return s.n / s.sl + s.fb * s.fb * s.hb * s.hb * s.sh * s.sh * s.p / (s.sl * s.rl * s.rl);
}

inline double eq20_bound(const StabilityInputs& s) {
  return 2.0 * s.rl / (s.hb * s.ab * s.bb * s.sh * s.sh * s.n * std::sqrt(s.n * s.p));
}

inline double d_lo(const StabilityInputs& s) {
  return s.al - s.bb * std::sqrt(s.p) * (s.fb * s.sh * s.hb + beta(s)) / s.rl;
}

inline double d_hi(const StabilityInputs& s) {
  return s.ab + std::abs(s.bl) * std::sqrt(s.p) * (s.fb * s.sh * s.hb + beta(s)) / s.rl;
}

}  // namespace oracle
