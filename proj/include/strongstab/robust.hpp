#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "strongstab/model.hpp"
#include "strongstab/spectra.hpp"

namespace strongstab {

/// One affine matrix uncertainty R + G * delta * H acting on a system matrix;
/// delta is bounded by 1 in Frobenius norm.
struct UncertaintyBlock {
  std::string target;  // "A0", "A1", ..., "B", "C"
  Mat G, H;
};

struct UncertaintySet {
  std::vector<UncertaintyBlock> blocks;
  std::vector<double> delay_bounds;  // |delta tau_k| <= bound_k < tau_k

  void validate(const DelaySystem& sys) const;
};

UncertaintySet load_uncertainty(const std::string& path, const DelaySystem& sys);

/// System with the affine matrix perturbations and delay shifts applied.
/// Perturbed delays are re-sorted (coincident delays merge their matrices).
DelaySystem realize_system(const DelaySystem& sys, const UncertaintySet& unc,
                           const std::vector<Mat>& delta, const std::vector<double>& dtau);

/// Sampled lower bounds of the worst-case spectral abscissa and of
/// alpha(B Kd C) over the admissible uncertainty set: deterministic extreme
/// points (zero, G/H-aligned rank-one matrix extremes, delay endpoints) plus
/// uniform random draws on the Frobenius ball and the delay intervals.
struct WorstCaseResult {
  double abscissa_lb;
  double alpha_ps_lb;
  int samples_evaluated;
  int solver_failures;
  std::vector<Mat> argmax_delta;       // attaining abscissa_lb
  std::vector<double> argmax_dtau;
};

WorstCaseResult sampled_worst_case(const DelaySystem& sys, const UncertaintySet& unc,
                                   const PidGains& gains, int nsamples, std::uint64_t seed,
                                   const SolverOpts& opts = {});

}  // namespace strongstab
