#pragma once

#include <optional>
#include <string>
#include <vector>

#include "strongstab/model.hpp"
#include "strongstab/spectra.hpp"
#include "strongstab/types.hpp"

namespace strongstab {

/// Algebraic fragility and strong-stability verdicts for a closed loop,
/// all driven by the spectrum of B*Kd*C.
struct FragilityReport {
  double rho_BKdC = 0.0;
  double alpha_BKdC = 0.0;
  std::vector<Complex> eig_BKdC;
  double nominal_abscissa = 0.0;
  bool nominal_stable = false;
  bool delay_fragile = false;          // rho > 1: any feedback delay destabilizes
  bool fd_fragile = false;             // eigenvalue outside clos(S)
  bool lowpass_destabilizing = false;  // eigenvalue with Re > 1
  bool cb_zero = false;                // relative degree > 1, strong without filter
  bool strong_with_filter = false;     // stable and Re(eig) < 1 throughout
  bool boundary_inconclusive = false;  // rho or alpha within 1e-9 of 1

  std::string to_json() const;
};

/// Membership in the closure of S = { Im in (-pi,pi), Re < Im cot(Im) }
/// (bound 1 at Im = 0, falling to -infinity as |Im| -> pi).
bool in_clos_S(Complex lambda);

FragilityReport fragility_report(const DelaySystem& sys, const PidGains& gains,
                                 const SolverOpts& opts = {});

/// True when the Kd = 0 loop has an odd number of closed-right-half-plane
/// roots: no derivative gain then achieves strong stabilizability with
/// filtering. Throws when a root sits on the counting contour.
bool odd_number_limitation(const DelaySystem& sys, const Mat& Kp, const Mat& Ki,
                           const SolverOpts& opts = {});

/// Routh-Hurwitz test for cubic (4 coefficients) or quartic (5 coefficients)
/// polynomials, coefficients in descending powers.
struct RouthResult {
  bool stable;
  std::vector<bool> conditions;
};
RouthResult routh_hurwitz(const std::vector<double>& coeffs);

enum class RegionKind { StrongStable, RobustNoFilter, StableFragile, Unstable };

struct RegionLabel {
  RegionKind kind;
  int rhp_count;  // closed-RHP root count (0 for the stable kinds)
};

/// Classification of the third-order PD example by its closed-form
/// stability inequalities; Unstable carries the winding-number root count.
RegionLabel third_order_region(double kp, double kd);

/// Imaginary-axis crossing frequency sqrt((-kp-1)/(1-kp)) of the
/// third-order example, defined for kp <= -1 or kp > 1.
std::optional<double> crossing_frequency(double kp);

}  // namespace strongstab
