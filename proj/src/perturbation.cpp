#include "strongstab/perturbation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "strongstab/analysis.hpp"
#include "strongstab/parallel.hpp"

namespace strongstab {

PerturbationFn make_perturbation(PerturbationKind kind, double r, int dim) {
  if (r < 0.0) throw std::invalid_argument("perturbation size r must be nonnegative");
  if (dim < 1) throw std::invalid_argument("perturbation dimension must be positive");
  return PerturbationFn{kind, r, dim};
}

AssumptionReport verify_assumptions(const PerturbationFn& R, double N_halfplane,
                                    const std::vector<double>& r_grid,
                                    const std::vector<Complex>& lambda_grid) {
  if (r_grid.empty() || lambda_grid.empty())
    throw std::invalid_argument("verify_assumptions: grids must be nonempty");
  AssumptionReport rep;

  PerturbationFn at_zero = R;
  at_zero.r = 0.0;
  rep.identity_at_zero = true;
  for (Complex lam : lambda_grid)
    if (std::abs(at_zero.kernel(lam) - 1.0) != 0.0) rep.identity_at_zero = false;
  if (!rep.identity_at_zero) rep.violations.push_back("item 3: R(lambda; 0) != I");

  for (double r : r_grid) {
    PerturbationFn Rr = R;
    Rr.r = r;
    double dev = 0.0;
    for (Complex lam : lambda_grid) dev = std::max(dev, std::abs(Rr.kernel(lam) - 1.0));
    rep.item4_max_dev.push_back(dev);
  }
  // grid is increasing in r; deviations should shrink toward 0 as r -> 0
  rep.item4_converges = rep.item4_max_dev.front() <= 1e-8 + 0.5 * rep.item4_max_dev.back();
  for (size_t i = 0; i + 1 < rep.item4_max_dev.size(); ++i)
    if (rep.item4_max_dev[i] > rep.item4_max_dev[i + 1] * (1.0 + 1e-9) + 1e-12)
      rep.item4_converges = false;
  if (!rep.item4_converges)
    rep.violations.push_back("item 4: ||R - I|| not shrinking towards r = 0 on the grid");

  double M = 0.0;
  for (double r : r_grid) {
    PerturbationFn Rr = R;
    Rr.r = r;
    for (Complex lam : lambda_grid) {
      if (lam.real() < -N_halfplane) continue;
      M = std::max(M, std::abs(Rr.kernel(lam)));
    }
  }
  rep.item5_bound = M;
  if (!std::isfinite(M)) rep.violations.push_back("item 5: kernel unbounded on the grid");
  return rep;
}

std::vector<double> default_sweep_grid() {
  std::vector<double> g;
  const int count = 13;
  for (int i = 0; i < count; ++i)
    g.push_back(std::pow(10.0, -4.0 + 3.0 * i / (count - 1.0)));
  return g;
}

SweepResult sweep(const DelaySystem& sys, const PidGains& gains, SweepVariant variant,
                  const std::vector<double>& grid, const SolverOpts& opts) {
  for (size_t i = 0; i + 1 < grid.size(); ++i)
    if (!(grid[i] < grid[i + 1]))
      throw std::invalid_argument("sweep: grid must be strictly increasing");

  SweepResult res;
  res.grid = grid;
  res.abscissa.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  res.chain_prediction.assign(grid.size(), std::nullopt);
  res.stable.assign(grid.size(), false);
  res.solved.assign(grid.size(), false);

  parallel_for_indexed(static_cast<int>(grid.size()), [&](int i) {
    const double size = grid[i];
    LoopConfig cfg;
    switch (variant) {
      case SweepVariant::FeedbackDelay:
        cfg = LoopConfig::feedback_delay(size);
        break;
      case SweepVariant::FiniteDifference:
        cfg = LoopConfig::finite_difference(size);
        break;
      case SweepVariant::LowPass:
        cfg = LoopConfig::low_pass(size);
        break;
    }
    try {
      double a = spectral_abscissa(assemble_pencil(sys, gains, cfg), opts);
      res.abscissa[i] = a;
      res.stable[i] = a < 0.0;
      res.solved[i] = true;
    } catch (const std::exception&) {
      // marked unsolved; the sweep continues
    }
    if (variant == SweepVariant::FeedbackDelay) {
      try {
        res.chain_prediction[i] = chain_abscissa(sys, gains, size);
      } catch (const std::exception&) {
      }
    }
  });
  return res;
}

std::string SweepResult::to_csv() const {
  auto fmt = [](double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  std::string out = "r,abscissa,stable,chain_prediction\r\n";
  for (size_t i = 0; i < grid.size(); ++i) {
    out += fmt(grid[i]) + ",";
    out += solved[i] ? fmt(abscissa[i]) : std::string("nan");
    out += stable[i] ? ",1," : ",0,";
    if (chain_prediction[i]) out += fmt(*chain_prediction[i]);
    out += "\r\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scaled limit equation z = eig * (1 - e^{-z}) from the finite-difference
// fragility analysis; a nonzero RHP solution exists iff eig is outside clos(S).
// ---------------------------------------------------------------------------

namespace {

Complex g_limit(Complex z, Complex eig) { return z - eig * (1.0 - std::exp(-z)); }
Complex g_limit_deriv(Complex z, Complex eig) { return 1.0 - eig * std::exp(-z); }

std::optional<Complex> newton_limit(Complex z0, Complex eig) {
  Complex z = z0;
  double gz = std::abs(g_limit(z, eig));
  for (int it = 0; it < 100; ++it) {
    Complex d = g_limit_deriv(z, eig);
    if (std::abs(d) < 1e-300) return std::nullopt;
    Complex step = -g_limit(z, eig) / d;
    double damp = 1.0;
    Complex zn = z + step;
    double gn = std::abs(g_limit(zn, eig));
    int halvings = 0;
    while (gn > gz && halvings++ < 40) {
      damp *= 0.5;
      zn = z + damp * step;
      gn = std::abs(g_limit(zn, eig));
    }
    if (halvings >= 40) return std::nullopt;
    z = zn;
    gz = gn;
    if (gz <= 1e-13 * std::max(1.0, std::abs(eig))) return z;
  }
  return std::nullopt;
}

bool acceptable_rhp_root(const std::optional<Complex>& z, Complex eig) {
  return z && z->real() > 1e-8 && std::abs(*z) > 1e-8 &&
         std::abs(g_limit(*z, eig)) <= 1e-10 * std::max(1.0, std::abs(eig));
}

std::optional<Complex> solve_limit_rhp(Complex eig) {
  // real eigenvalue > 1: provably bracketable on (0, eig)
  if (std::abs(eig.imag()) < 1e-14 && eig.real() > 1.0) {
    double lo = 1e-12, hi = eig.real();
    auto g = [&](double x) { return x - eig.real() * (1.0 - std::exp(-x)); };
    // g(lo) < 0 (slope 1 - eig at 0), g(hi) = eig e^{-eig} > 0
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      (g(mid) < 0.0 ? lo : hi) = mid;
    }
    return Complex(0.5 * (lo + hi), 0.0);
  }

  std::optional<Complex> z = newton_limit(eig, eig);
  if (acceptable_rhp_root(z, eig)) return z;

  // coarse scan of the right half-plane, then polish the best candidates
  const double re_hi = std::max(4.0, 2.0 * std::abs(eig));
  const double im_hi = std::max(8.0, 2.0 * std::abs(eig));
  std::vector<Complex> seeds;
  std::vector<double> score;
  for (int i = 0; i < 48; ++i) {
    double re = 1e-3 + (re_hi - 1e-3) * i / 47.0;
    for (int j = 0; j < 96; ++j) {
      double im = -im_hi + 2.0 * im_hi * j / 95.0;
      Complex zz(re, im);
      double s = std::abs(g_limit(zz, eig)) + 1e3 * std::max(0.0, 1e-2 - std::abs(zz));
      if (seeds.size() < 12) {
        seeds.push_back(zz);
        score.push_back(s);
      } else {
        size_t worst = 0;
        for (size_t k = 1; k < score.size(); ++k)
          if (score[k] > score[worst]) worst = k;
        if (s < score[worst]) {
          seeds[worst] = zz;
          score[worst] = s;
        }
      }
    }
  }
  for (Complex s : seeds) {
    z = newton_limit(s, eig);
    if (acceptable_rhp_root(z, eig)) return z;
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::pair<Complex, std::optional<Complex>>> scaled_limit_roots(
    const std::vector<Complex>& eigs) {
  std::vector<std::pair<Complex, std::optional<Complex>>> out;
  out.reserve(eigs.size());
  for (Complex eig : eigs) {
    if (in_clos_S(eig)) {
      out.emplace_back(eig, std::nullopt);
      continue;
    }
    std::optional<Complex> z = solve_limit_rhp(eig);
    if (!z)
      throw std::runtime_error(
          "scaled_limit_roots: eigenvalue outside clos(S) but the limit-equation solve "
          "failed; solver bug");
    out.emplace_back(eig, z);
  }
  return out;
}

}  // namespace strongstab
