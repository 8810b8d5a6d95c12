#pragma once

#include <optional>
#include <string>
#include <vector>

#include "strongstab/model.hpp"
#include "strongstab/types.hpp"

namespace strongstab {

struct SolverOpts {
  int N = 40;                    // collocation degree (Chebyshev extreme points)
  double newton_tol = 1e-10;     // relative residual ||F v|| / (||v|| scale)
  int max_newton = 30;
  std::optional<double> re_min;  // reporting window; auto when unset
  std::optional<double> im_max;

  void validate() const {
    if (N < 10) throw std::invalid_argument("collocation degree N must be >= 10");
  }
};

/// Characteristic roots inside the reporting window, Newton-refined on the
/// nonlinear pencil, sorted by descending real part.
struct RootSet {
  std::vector<Complex> roots;
  std::vector<double> residuals;  // ||F(root) v|| / (||v|| * term scale at root)
  std::vector<bool> converged;
  int discretization_N = 0;

  std::string to_json() const;
  std::string to_csv() const;
};

RootSet rightmost_roots(const CharacteristicPencil& pencil, const SolverOpts& opts = {});

/// Real part of the rightmost converged root; for the Nominal variant this is
/// the design objective f(Kp, Kd, Ki).
double spectral_abscissa(const CharacteristicPencil& pencil, const SolverOpts& opts = {});

struct Rect {
  double re_lo, re_hi, im_lo, im_hi;
};

/// Number of pencil roots strictly inside the rectangle, counted with
/// multiplicity by the winding number of det F along the boundary.
/// Throws when adaptive phase tracking cannot separate a root from the
/// boundary (suggest inflating the rectangle).
int count_rhp_roots(const CharacteristicPencil& pencil, const Rect& rect);

/// Spectral abscissa and spectral radius of a square real matrix.
std::pair<double, double> matrix_alpha_rho(const Mat& M);

/// Eigenvalues of B*Kd*C computed on the m x m product Kd*C*B plus n-m zeros
/// (identical nonzero spectrum, better conditioned).
std::vector<Complex> bkdc_eigenvalues(const DelaySystem& sys, const Mat& Kd);

/// Real-part limit (1/r) ln rho(B Kd C) of the essential root chain created
/// by feedback delay r. Throws when B Kd C = 0 (no neutral chain).
double chain_abscissa(const DelaySystem& sys, const PidGains& gains, double r);

/// Modulus bound for roots with Re >= re_floor; only valid for retarded
/// pencils (nonsingular mass, no delayed lambda terms).
double rhp_modulus_bound(const CharacteristicPencil& pencil, double re_floor);

}  // namespace strongstab
