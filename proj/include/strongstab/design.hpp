#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "strongstab/model.hpp"
#include "strongstab/spectra.hpp"

namespace strongstab {

struct DesignOpts {
  int starts = 10;
  std::uint64_t seed = 0;
  double t_penalty = 1e2;
  int max_iters = 300;
  double step_tol = 1e-9;
  bool constrained = true;  // false: skip the Kd rescale and the alpha penalty
  // entries fixed to zero (false = frozen at 0, true = free); empty = all free
  std::optional<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> mask_kp, mask_kd, mask_ki;
  std::optional<PidGains> initial;  // used by start 0; remaining starts draw N(0,1)
  int opt_N = 24;                   // collocation degree inside the optimizer
  SolverOpts verify;                // full-accuracy re-verification of the winner

  void validate() const {
    if (starts < 1) throw std::invalid_argument("starts must be >= 1");
    if (t_penalty <= 0.0) throw std::invalid_argument("t_penalty must be positive");
  }
};

struct StartRecord {
  int index = 0;
  double objective = 0.0;  // nominal abscissa at the final iterate
  double constraint = 0.0; // alpha(B Kd C), or rho for the input-delay variant
  bool feasible = false;
  std::vector<double> trace;  // accepted penalized-objective values
};

struct DesignResult {
  PidGains gains;
  double objective = 0.0;        // nominal spectral abscissa at the optimum
  double alpha_constraint = 0.0; // alpha(B Kd C) (rho for input delay)
  std::optional<double> T_selected;
  bool feasible = false;
  int best_start = -1;
  std::vector<StartRecord> starts;

  std::string to_json() const;
};

/// f(Kp,Kd,Ki) + t * max(0, alpha(B Kd C) - 1) with f the nominal spectral
/// abscissa; +infinity at points where I - B Kd C is singular.
double objective_with_penalty(const DelaySystem& sys, const PidGains& gains, double t,
                              const SolverOpts& opts = {});

/// Derivative of the nominal spectral abscissa with respect to every free
/// gain entry, via left/right null vectors of the characteristic matrix at
/// the rightmost root.
struct Gradient {
  Mat kp, kd, ki;
  Complex lambda_star{0.0, 0.0};
  bool multiple_rightmost = false;  // subgradient of a deterministically chosen active root
};
Gradient grad_objective(const DelaySystem& sys, const PidGains& gains,
                        const DesignOpts& opts = {}, const SolverOpts& solver = {});

/// Step 2 of the design procedure: scale Kd by 0.9/alpha(B Kd C) whenever
/// alpha exceeds 0.9. Idempotent.
PidGains rescale_kd(const DelaySystem& sys, const PidGains& gains);

/// Four-step strongly-stabilizing PID design: initialize, rescale Kd,
/// multistart penalized abscissa minimization (t escalated x10 until
/// alpha < 1, capped), then cut-off selection.
DesignResult design_pid(const DelaySystem& sys, const DesignOpts& opts = {});

/// Halving search for a filter constant whose closed loop keeps the nominal
/// decay within 5%: first accepted T in [1e-12, 1e-2].
double select_T(const DelaySystem& sys, const PidGains& gains, const SolverOpts& opts = {});

/// Input-delay design: minimizes the abscissa of the tau_u loop under a
/// log-barrier keeping rho(B Kd C) < 1 at every iterate. tau_u = 0 delegates
/// to design_pid.
DesignResult design_input_delay(const DelaySystem& sys, const DesignOpts& opts = {});

}  // namespace strongstab
