#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "strongstab/model.hpp"
#include "strongstab/spectra.hpp"

namespace strongstab {

PerturbationFn make_perturbation(PerturbationKind kind, double r, int dim);

/// Numerical check of the perturbation-family assumptions: identity at
/// r = 0 (item 3), uniform convergence to the identity as r -> 0 (item 4)
/// and a uniform bound on Re(lambda) >= -N_halfplane (item 5). Item 1
/// (meromorphy/continuity) is not machine-checkable and is out of scope.
struct AssumptionReport {
  bool identity_at_zero = false;
  std::vector<double> item4_max_dev;  // max ||R - I|| over the lambda grid, per r
  bool item4_converges = false;
  double item5_bound = 0.0;  // empirical M
  std::vector<std::string> violations;
};

AssumptionReport verify_assumptions(const PerturbationFn& R, double N_halfplane,
                                    const std::vector<double>& r_grid,
                                    const std::vector<Complex>& lambda_grid);

enum class SweepVariant { FeedbackDelay, FiniteDifference, LowPass };

/// Spectral abscissa of the perturbed loop across a grid of perturbation
/// sizes; chain_prediction is the essential-chain limit for feedback delay.
struct SweepResult {
  std::vector<double> grid;
  std::vector<double> abscissa;  // NaN where the per-point solve failed
  std::vector<std::optional<double>> chain_prediction;
  std::vector<bool> stable;
  std::vector<bool> solved;

  std::string to_csv() const;  // columns r,abscissa,stable,chain_prediction
};

SweepResult sweep(const DelaySystem& sys, const PidGains& gains, SweepVariant variant,
                  const std::vector<double>& grid, const SolverOpts& opts = {});

/// Log-spaced default sweep grid over [1e-4, 1e-1], 13 points.
std::vector<double> default_sweep_grid();

/// For each eigenvalue of B*Kd*C, the open-right-half-plane solution of the
/// scaled limit equation z = eig (1 - e^{-z}), present exactly when the
/// eigenvalue lies outside clos(S). Throws if the solve fails although a
/// root is certified to exist.
std::vector<std::pair<Complex, std::optional<Complex>>> scaled_limit_roots(
    const std::vector<Complex>& eigs);

}  // namespace strongstab
