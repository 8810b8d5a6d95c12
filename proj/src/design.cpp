#include "strongstab/design.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "strongstab/parallel.hpp"

namespace strongstab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHurwitzMargin = 1e-9;

// ---------------------------------------------------------------------------
// Free-parameter packing (structure masks fix entries to zero)
// ---------------------------------------------------------------------------

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Packing {
  int m, p;
  BoolMat mask_kp, mask_kd, mask_ki;
  int dim;

  Packing(const DelaySystem& sys, const DesignOpts& opts) : m(sys.m), p(sys.p) {
    auto pick = [&](const std::optional<BoolMat>& mask) {
      if (!mask) return BoolMat::Constant(m, p, true).eval();
      if (mask->rows() != m || mask->cols() != p)
        throw std::invalid_argument("structure mask must be m x p");
      return *mask;
    };
    mask_kp = pick(opts.mask_kp);
    mask_kd = pick(opts.mask_kd);
    mask_ki = pick(opts.mask_ki);
    dim = 0;
    for (const BoolMat* msk : {&mask_kp, &mask_kd, &mask_ki})
      dim += static_cast<int>(msk->cast<int>().sum());
  }

  Vec pack(const Mat& Kp, const Mat& Kd, const Mat& Ki) const {
    Vec x(dim);
    int idx = 0;
    auto put = [&](const Mat& K, const BoolMat& msk) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j)
          if (msk(i, j)) x(idx++) = K(i, j);
    };
    put(Kp, mask_kp);
    put(Kd, mask_kd);
    put(Ki, mask_ki);
    return x;
  }

  void unpack(const Vec& x, Mat& Kp, Mat& Kd, Mat& Ki) const {
    int idx = 0;
    auto get = [&](Mat& K, const BoolMat& msk) {
      K = Mat::Zero(m, p);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j)
          if (msk(i, j)) K(i, j) = x(idx++);
    };
    get(Kp, mask_kp);
    get(Kd, mask_kd);
    get(Ki, mask_ki);
  }

  void apply_mask(Mat& Kp, Mat& Kd, Mat& Ki) const {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p; ++j) {
        if (!mask_kp(i, j)) Kp(i, j) = 0.0;
        if (!mask_kd(i, j)) Kd(i, j) = 0.0;
        if (!mask_ki(i, j)) Ki(i, j) = 0.0;
      }
  }
};

// ---------------------------------------------------------------------------
// Rightmost-root sensitivities on the unaugmented n x n characteristic matrix
//   F(l) = l (I - e B Kd C) - A0 - sum Ak e^{-l tau_k} - e (B Kp C + B Ki C / l)
// with e = e^{-l tau_u} for the input-delay loop and e = 1 otherwise
// (valid at roots l != 0, which is where the gradient is evaluated).
// ---------------------------------------------------------------------------

struct SmallForm {
  const DelaySystem& sys;
  const Mat& Kp;
  const Mat& Kd;
  const Mat& Ki;
  bool has_ki;
  std::optional<double> tau_u;

  CMat eval(Complex l) const {
    Complex e = tau_u ? std::exp(-l * *tau_u) : Complex(1.0, 0.0);
    CMat F = l * CMat::Identity(sys.n, sys.n) - sys.A[0];
    for (int k = 1; k <= sys.K(); ++k) F -= std::exp(-l * sys.delays[k - 1]) * sys.A[k];
    CMat fb = l * (sys.B * Kd * sys.C) + (sys.B * Kp * sys.C);
    if (has_ki) fb += (sys.B * Ki * sys.C) / l;
    F -= e * fb;
    return F;
  }

  CMat deriv(Complex l) const {
    Complex e = tau_u ? std::exp(-l * *tau_u) : Complex(1.0, 0.0);
    CMat dF = CMat::Identity(sys.n, sys.n);
    for (int k = 1; k <= sys.K(); ++k)
      dF += sys.delays[k - 1] * std::exp(-l * sys.delays[k - 1]) * sys.A[k];
    CMat fb = l * (sys.B * Kd * sys.C) + (sys.B * Kp * sys.C);
    if (has_ki) fb += (sys.B * Ki * sys.C) / l;
    CMat dfb = CMat(sys.B * Kd * sys.C);
    if (has_ki) dfb -= CMat(sys.B * Ki * sys.C) / (l * l);
    if (tau_u)
      dF -= e * (dfb - *tau_u * fb);
    else
      dF -= e * dfb;
    return dF;
  }
};

struct AbscissaGrad {
  Mat kp, kd, ki;
  bool multiple = false;
};

// d Re(l*)/d gains from left/right null vectors of the small form.
AbscissaGrad abscissa_gradient(const SmallForm& sf, Complex lstar) {
  const DelaySystem& sys = sf.sys;
  CMat F = sf.eval(lstar);
  Eigen::JacobiSVD<CMat> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  CVec v = svd.matrixV().col(sys.n - 1);
  CVec u = svd.matrixU().col(sys.n - 1);
  Complex denom = (u.adjoint() * sf.deriv(lstar) * v)(0, 0);
  AbscissaGrad g;
  if (std::abs(denom) < 1e-14) {  // (near-)defective rightmost root
    g.kp = Mat::Zero(sys.m, sys.p);
    g.kd = g.kp;
    g.ki = g.kp;
    g.multiple = true;
    return g;
  }
  Complex e = sf.tau_u ? std::exp(-lstar * *sf.tau_u) : Complex(1.0, 0.0);
  // dF/dKp[i][j] = -e B ei ej' C  =>  dl = e (u^H B ei)(ej' C v) / denom
  CVec Bu = sys.B.transpose() * u.conjugate();  // (u^H B)^T
  CVec Cv = sys.C * v;
  auto outer = [&](Complex shape) {
    CMat G = (shape / denom) * Bu * Cv.transpose();
    return Mat(G.real());
  };
  g.kp = outer(e);
  g.kd = outer(e * lstar);
  g.ki = sf.has_ki ? outer(e / lstar) : Mat::Zero(sys.m, sys.p);
  return g;
}

// deterministic rightmost pick among the converged roots: (Re desc, Im desc);
// flags >1 distinct active root beyond the conjugate pair
struct Rightmost {
  Complex lambda;
  bool multiple;
};

std::optional<Rightmost> pick_rightmost(const RootSet& rs) {
  std::optional<Rightmost> out;
  double top = -kInf;
  for (size_t i = 0; i < rs.roots.size(); ++i)
    if (rs.converged[i]) top = std::max(top, rs.roots[i].real());
  if (top == -kInf) return std::nullopt;
  std::vector<Complex> active;
  for (size_t i = 0; i < rs.roots.size(); ++i)
    if (rs.converged[i] && rs.roots[i].real() >= top - 1e-8) active.push_back(rs.roots[i]);
  std::sort(active.begin(), active.end(), [](Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  int distinct = 0;
  for (const Complex& a : active)
    if (a.imag() >= -1e-12) ++distinct;  // conjugate partners are not distinct
  out = Rightmost{active.front(), distinct > 1};
  return out;
}

// ---------------------------------------------------------------------------
// alpha / rho of Kd C B with eigenvalue sensitivities
// ---------------------------------------------------------------------------

struct ConstraintEval {
  double alpha;  // max(Re eig, 0 padding when n > m)
  double rho;
  Mat dalpha_dkd;  // of the attained eigenvalue (zero if attained by padding)
  Mat drho_dkd;
};

ConstraintEval constraint_eval(const DelaySystem& sys, const Mat& Kd) {
  ConstraintEval ce;
  Mat CB = sys.C * sys.B;
  Mat S = Kd * CB;  // m x m
  Eigen::EigenSolver<Mat> es(S);
  Eigen::EigenSolver<Mat> esT(Mat(S.transpose()));

  const int m = sys.m;
  // attained eigenvalues, ties broken lexicographically by (Re desc, Im desc)
  int ia = 0, ir = 0;
  for (int i = 1; i < m; ++i) {
    Complex mu = es.eigenvalues()(i), cur = es.eigenvalues()(ia);
    if (mu.real() > cur.real() ||
        (mu.real() == cur.real() && mu.imag() > cur.imag()))
      ia = i;
    if (std::abs(mu) > std::abs(es.eigenvalues()(ir))) ir = i;
  }
  double amax = es.eigenvalues()(ia).real();
  ce.alpha = sys.n > m ? std::max(amax, 0.0) : amax;
  ce.rho = std::abs(es.eigenvalues()(ir));
  if (sys.n > m && amax < 0.0) ia = -1;  // the padding zeros attain the max
  if (ce.rho == 0.0) ir = -1;

  auto eig_sensitivity = [&](int idx) -> CMat {
    Complex mu = es.eigenvalues()(idx);
    CVec z = es.eigenvectors().col(idx);
    // matching left eigenvector from S^T
    int best = 0;
    for (int i = 1; i < m; ++i)
      if (std::abs(esT.eigenvalues()(i) - mu) < std::abs(esT.eigenvalues()(best) - mu))
        best = i;
    CVec w = esT.eigenvectors().col(best);
    Complex wz = (w.adjoint() * z)(0, 0);
    if (std::abs(wz) < 1e-14) return CMat::Zero(sys.m, sys.p);
    // d mu / d Kd[i][j] = (w^H ei)(ej' CB z) / (w^H z)
    CVec CBz = CB.cast<Complex>() * z;
    return (w.conjugate() * CBz.transpose()) / wz;
  };

  ce.dalpha_dkd = Mat::Zero(sys.m, sys.p);
  if (ia >= 0) ce.dalpha_dkd = eig_sensitivity(ia).real();
  ce.drho_dkd = Mat::Zero(sys.m, sys.p);
  if (ir >= 0) {
    Complex mu = es.eigenvalues()(ir);
    CMat dmu = eig_sensitivity(ir);
    ce.drho_dkd = ((std::conj(mu) / ce.rho) * dmu).real();
  }
  return ce;
}

double alpha_bkdc(const DelaySystem& sys, const Mat& Kd) {
  double a = sys.n > sys.m ? 0.0 : -kInf;
  for (Complex e : bkdc_eigenvalues(sys, Kd)) a = std::max(a, e.real());
  return a;
}

double rho_bkdc(const DelaySystem& sys, const Mat& Kd) {
  double r = 0.0;
  for (Complex e : bkdc_eigenvalues(sys, Kd)) r = std::max(r, std::abs(e));
  return r;
}

// ---------------------------------------------------------------------------
// merit function: nominal (penalty on alpha) or input delay (log barrier on rho)
// ---------------------------------------------------------------------------

struct Merit {
  const DelaySystem& sys;
  const Packing& pack;
  double t_penalty;      // nominal mode
  double mu_barrier;     // input-delay mode (> 0 switches the mode)
  std::optional<double> tau_u;
  SolverOpts solver;

  struct Value {
    double f = kInf;       // merit value
    Vec g;                 // merit gradient over free entries
    double abscissa = kInf;
    double constraint = kInf;  // alpha or rho
    bool ok = false;
  };

  Value operator()(const Vec& x) const {
    Value val;
    val.g = Vec::Zero(pack.dim);
    Mat Kp, Kd, Ki;
    pack.unpack(x, Kp, Kd, Ki);
    PidGains gains;
    try {
      gains = PidGains::from(Kp, Kd, Ki);
    } catch (const std::exception&) {
      return val;
    }

    ConstraintEval ce = constraint_eval(sys, Kd);
    val.constraint = mu_barrier > 0.0 ? ce.rho : ce.alpha;
    if (mu_barrier > 0.0 && ce.rho >= 1.0 - 1e-12) return val;  // barrier wall

    LoopConfig cfg = tau_u ? LoopConfig::feedback_delay(*tau_u) : LoopConfig::nominal();
    RootSet rs;
    try {
      rs = rightmost_roots(assemble_pencil(sys, gains, cfg), solver);
    } catch (const std::exception&) {
      return val;  // singular mass or solver breakdown: +inf sentinel
    }
    std::optional<Rightmost> rm = pick_rightmost(rs);
    if (!rm) return val;
    val.abscissa = rm->lambda.real();

    bool has_ki = Ki.norm() > 0.0;
    SmallForm sf{sys, Kp, Kd, Ki, has_ki, tau_u};
    AbscissaGrad ag = abscissa_gradient(sf, rm->lambda);
    pack.apply_mask(ag.kp, ag.kd, ag.ki);
    Mat g_kd = ag.kd;

    val.f = val.abscissa;
    if (mu_barrier > 0.0) {
      val.f -= mu_barrier * std::log(1.0 - ce.rho);
      g_kd += (mu_barrier / (1.0 - ce.rho)) * ce.drho_dkd;
    } else if (t_penalty > 0.0 && ce.alpha > 1.0) {
      val.f += t_penalty * (ce.alpha - 1.0);
      g_kd += t_penalty * ce.dalpha_dkd;
    }
    pack.apply_mask(ag.kp, g_kd, ag.ki);
    val.g = pack_grad(ag.kp, g_kd, ag.ki);
    val.ok = std::isfinite(val.f);
    return val;
  }

  Vec pack_grad(const Mat& gkp, const Mat& gkd, const Mat& gki) const {
    return pack.pack(gkp, gkd, gki);
  }
};

// ---------------------------------------------------------------------------
// BFGS with weak Wolfe line search and a gradient-sampling fallback
// ---------------------------------------------------------------------------

struct MinimizeResult {
  Vec x;
  double f;
  std::vector<double> trace;
};

// min-norm element of the convex hull of the columns of G (Frank-Wolfe)
Vec min_norm_element(const Mat& G) {
  const int k = static_cast<int>(G.cols());
  Vec w = Vec::Constant(k, 1.0 / k);
  for (int it = 0; it < 150; ++it) {
    Vec d = G * w;
    Vec grad = G.transpose() * d;
    int j;
    grad.minCoeff(&j);
    Vec dir = -w;
    dir(j) += 1.0;
    Vec Gdir = G * dir;
    double den = Gdir.squaredNorm();
    if (den < 1e-30) break;
    double gamma = std::clamp(-d.dot(Gdir) / den, 0.0, 1.0);
    if (gamma <= 0.0) break;
    w += gamma * dir;
  }
  return G * w;
}

MinimizeResult minimize_bfgs_single(const Merit& merit, Vec x0, int max_iters,
                                    double step_tol, std::mt19937_64& rng) {
  const int dim = static_cast<int>(x0.size());
  MinimizeResult res;
  res.x = x0;

  Merit::Value cur = merit(x0);
  if (!cur.ok) {
    res.f = cur.f;
    return res;
  }
  res.f = cur.f;
  res.trace.push_back(cur.f);

  Mat H = Mat::Identity(dim, dim);
  const double c1 = 1e-6, c2 = 0.5;

  auto gradient_sampling = [&](void) -> bool {
    // stagnation fallback: minimum-norm element of sampled gradients in
    // shrinking balls, with an expanding descent step
    bool progressed = false;
    std::normal_distribution<double> gauss(0.0, 1.0);
    double scale = std::max(1.0, res.x.norm());
    for (double eps : {1e-3, 1e-4, 1e-5, 1e-6}) {
      for (int round = 0; round < 15; ++round) {
        const int k = std::min(2 * dim + 1, 30);
        Mat G(dim, k);
        G.col(0) = cur.g;
        int have = 1;
        for (int s = 1; s < k; ++s) {
          Vec u(dim);
          for (int i = 0; i < dim; ++i) u(i) = gauss(rng);
          double nu = u.norm();
          if (nu == 0.0) continue;
          Merit::Value mv = merit(res.x + (eps * scale / nu) * u);
          if (!mv.ok) continue;
          G.col(have++) = mv.g;
        }
        if (have < 2) break;
        Vec d = min_norm_element(G.leftCols(have));
        double nd = d.norm();
        if (nd <= 1e-7) {
          if (eps <= 1e-6) return progressed;  // stationary at the tightest radius
          break;                               // inconclusive for a wide ball
        }
        Vec dir = -d / nd;
        double t = eps * scale;
        Merit::Value mv = merit(res.x + t * dir);
        int halvings = 0;
        while ((!mv.ok || mv.f >= cur.f - 1e-12) && halvings++ < 25) {
          t *= 0.5;
          mv = merit(res.x + t * dir);
        }
        if (!mv.ok || mv.f >= cur.f - 1e-12) break;
        // expand while the merit keeps dropping
        while (true) {
          Merit::Value wide = merit(res.x + 2.0 * t * dir);
          if (!wide.ok || wide.f >= mv.f) break;
          t *= 2.0;
          mv = wide;
        }
        res.x += t * dir;
        cur = mv;
        res.f = mv.f;
        res.trace.push_back(mv.f);
        progressed = true;
      }
    }
    return progressed;
  };

  bool scaled_h = false;
  for (int it = 0; it < max_iters; ++it) {
    Vec d = -(H * cur.g);
    if (cur.g.dot(d) >= -1e-14 * cur.g.norm() * std::max(d.norm(), 1e-300)) {
      H = Mat::Identity(dim, dim);
      scaled_h = false;
      d = -cur.g;
    }
    double gd0 = cur.g.dot(d);
    if (!(gd0 < 0.0)) {
      if (!gradient_sampling()) break;
      continue;
    }

    // weak Wolfe bisection bracket
    auto line_search = [&](Merit::Value& trial, double& t_out) {
      double lo = 0.0, hi = kInf, t = 1.0;
      for (int ls = 0; ls < 55; ++ls) {
        trial = merit(res.x + t * d);
        if (!trial.ok || trial.f > cur.f + c1 * t * gd0) {
          hi = t;
        } else if (trial.g.dot(d) < c2 * gd0) {
          lo = t;
        } else {
          t_out = t;
          return true;
        }
        t = std::isinf(hi) ? 2.0 * lo + 1.0 : 0.5 * (lo + hi);
        if (t < 1e-16) break;
      }
      if (lo > 0.0) {  // sufficient decrease without curvature: take it
        trial = merit(res.x + lo * d);
        if (trial.ok && trial.f <= cur.f + c1 * lo * gd0) {
          t_out = lo;
          return true;
        }
      }
      return false;
    };
    Merit::Value trial;
    double t = 0.0;
    bool found = line_search(trial, t);
    if (!found && scaled_h) {  // retry once along steepest descent
      H = Mat::Identity(dim, dim);
      scaled_h = false;
      d = -cur.g;
      gd0 = cur.g.dot(d);
      found = line_search(trial, t);
    }
    if (!found) {
      if (!gradient_sampling()) break;
      continue;
    }

    Vec s = t * d;
    Vec y = trial.g - cur.g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled_h) {  // calibrate the metric before the first update
        H = (sy / y.squaredNorm()) * Mat::Identity(dim, dim);
        scaled_h = true;
      }
      Vec Hy = H * y;
      double yHy = y.dot(Hy);
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
           (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }
    res.x += s;
    cur = trial;
    res.f = cur.f;
    res.trace.push_back(cur.f);
    if (s.norm() <= step_tol * std::max(1.0, res.x.norm())) {
      if (!gradient_sampling()) break;
    }
  }
  return res;
}

// descent with restart kicks out of shallow nonsmooth stalls; the accepted-step
// budget is shared across the restarts and the best point wins
MinimizeResult minimize_bfgs(const Merit& merit, Vec x0, int max_iters, double step_tol,
                             std::mt19937_64& rng) {
  MinimizeResult best = minimize_bfgs_single(merit, std::move(x0), max_iters, step_tol, rng);
  int used = static_cast<int>(best.trace.size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  int kicks = 0;
  while (used < max_iters && kicks++ < 6) {
    double sigma = (kicks % 2 == 1 ? 0.05 : 0.01) * (1.0 + best.x.norm());
    Vec kicked = best.x;
    for (int i = 0; i < kicked.size(); ++i) kicked(i) += sigma * gauss(rng);
    MinimizeResult next =
        minimize_bfgs_single(merit, std::move(kicked), max_iters - used, step_tol, rng);
    used += static_cast<int>(next.trace.size());
    // the recorded trace is the best-so-far envelope across restarts
    for (double v : next.trace)
      best.trace.push_back(std::min(best.trace.back(), v));
    if (next.f < best.f) {
      best.x = next.x;
      best.f = next.f;
    }
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// public operations
// ---------------------------------------------------------------------------

double objective_with_penalty(const DelaySystem& sys, const PidGains& gains, double t,
                              const SolverOpts& opts) {
  if (t <= 0.0) throw std::invalid_argument("penalty weight t must be positive");
  double f;
  try {
    f = spectral_abscissa(assemble_pencil(sys, gains, LoopConfig::nominal()), opts);
  } catch (const std::exception&) {
    return kInf;  // singular (I - B Kd C) or solver breakdown
  }
  double alpha = alpha_bkdc(sys, gains.Kd);
  return f + t * std::max(0.0, alpha - 1.0);
}

Gradient grad_objective(const DelaySystem& sys, const PidGains& gains, const DesignOpts& opts,
                        const SolverOpts& solver) {
  RootSet rs = rightmost_roots(assemble_pencil(sys, gains, LoopConfig::nominal()), solver);
  std::optional<Rightmost> rm = pick_rightmost(rs);
  if (!rm) throw std::runtime_error("grad_objective: no converged rightmost root");
  SmallForm sf{sys, gains.Kp, gains.Kd, gains.Ki, gains.Ki.norm() > 0.0, std::nullopt};
  AbscissaGrad ag = abscissa_gradient(sf, rm->lambda);
  Packing pack(sys, opts);
  pack.apply_mask(ag.kp, ag.kd, ag.ki);
  Gradient g;
  g.kp = ag.kp;
  g.kd = ag.kd;
  g.ki = ag.ki;
  g.lambda_star = rm->lambda;
  g.multiple_rightmost = rm->multiple || ag.multiple;
  return g;
}

PidGains rescale_kd(const DelaySystem& sys, const PidGains& gains) {
  double alpha = alpha_bkdc(sys, gains.Kd);
  if (alpha <= 0.9 * (1.0 + 1e-12)) return gains;
  return PidGains::from(gains.Kp, Mat(gains.Kd * (0.9 / alpha)), gains.Ki, gains.filter_T);
}

double select_T(const DelaySystem& sys, const PidGains& gains, const SolverOpts& opts) {
  double a0 = spectral_abscissa(assemble_pencil(sys, gains, LoopConfig::nominal()), opts);
  double alpha = alpha_bkdc(sys, gains.Kd);
  if (!(a0 < 0.0) || alpha > 1.0 - kHurwitzMargin)
    throw std::invalid_argument(
        "select_T requires a stable nominal loop and alpha(B Kd C) < 1");
  for (double T = 1e-2; T >= 1e-12; T *= 0.5) {
    try {
      double aT = spectral_abscissa(assemble_pencil(sys, gains, LoopConfig::low_pass(T)), opts);
      if (aT < 0.0 && aT <= a0 + 0.05 * std::abs(a0)) return T;
    } catch (const std::exception&) {
    }
  }
  throw std::runtime_error(
      "select_T: no filter constant down to 1e-12 preserves the nominal decay; "
      "alpha(B Kd C) is likely too close to 1");
}

namespace {

DesignResult run_design(const DelaySystem& sys, const DesignOpts& opts, bool input_delay_mode) {
  opts.validate();
  std::optional<double> tau_u;
  if (input_delay_mode) {
    if (!sys.input_delay || !(*sys.input_delay > 0.0))
      throw std::invalid_argument("design_input_delay: system must carry a positive input delay");
    tau_u = *sys.input_delay;
  }
  Packing pack(sys, opts);

  struct StartOutcome {
    StartRecord rec;
    Mat Kp, Kd, Ki;
  };
  std::vector<StartOutcome> outcomes(opts.starts);

  parallel_for_indexed(opts.starts, [&](int s) {
    std::mt19937_64 rng(opts.seed + static_cast<std::uint64_t>(s));
    Mat Kp, Kd, Ki;
    if (s == 0 && opts.initial) {
      Kp = opts.initial->Kp;
      Kd = opts.initial->Kd;
      Ki = opts.initial->Ki;
    } else {
      std::normal_distribution<double> gauss(0.0, 1.0);
      Kp = Mat::NullaryExpr(sys.m, sys.p, [&]() { return gauss(rng); });
      Kd = Mat::NullaryExpr(sys.m, sys.p, [&]() { return gauss(rng); });
      Ki = Mat::NullaryExpr(sys.m, sys.p, [&]() { return gauss(rng); });
    }
    pack.apply_mask(Kp, Kd, Ki);

    // step 2: rescale Kd towards the constraint interior
    if (opts.constrained) {
      double scale_ref = input_delay_mode ? rho_bkdc(sys, Kd) : alpha_bkdc(sys, Kd);
      if (scale_ref > 0.9 * (1.0 + 1e-12)) Kd *= 0.9 / scale_ref;
    }

    SolverOpts inner;
    inner.N = opts.opt_N;
    Vec x = pack.pack(Kp, Kd, Ki);
    std::vector<double> trace;

    if (!input_delay_mode && !opts.constrained) {
      // plain abscissa minimization (no rescale, no penalty)
      Merit merit{sys, pack, 0.0, 0.0, std::nullopt, inner};
      MinimizeResult mr = minimize_bfgs(merit, x, opts.max_iters, opts.step_tol, rng);
      x = mr.x;
      trace = std::move(mr.trace);
    } else if (!input_delay_mode) {
      // step 3: penalty escalation until alpha < 1 at the minimizer
      double t = opts.t_penalty;
      for (int esc = 0; esc <= 3; ++esc) {
        Merit merit{sys, pack, t, 0.0, std::nullopt, inner};
        MinimizeResult mr = minimize_bfgs(merit, x, opts.max_iters, opts.step_tol, rng);
        x = mr.x;
        trace.insert(trace.end(), mr.trace.begin(), mr.trace.end());
        Mat tKp, tKd, tKi;
        pack.unpack(x, tKp, tKd, tKi);
        if (alpha_bkdc(sys, tKd) <= 1.0 - kHurwitzMargin) break;
        t *= 10.0;
      }
    } else {
      // log-barrier loops, mu decreased x10
      for (double mu : {1e-1, 1e-2, 1e-3}) {
        Merit merit{sys, pack, 0.0, mu, tau_u, inner};
        MinimizeResult mr = minimize_bfgs(merit, x, opts.max_iters, opts.step_tol, rng);
        x = mr.x;
        trace.insert(trace.end(), mr.trace.begin(), mr.trace.end());
      }
    }

    StartOutcome& out = outcomes[s];
    pack.unpack(x, out.Kp, out.Kd, out.Ki);
    out.rec.index = s;
    out.rec.trace = std::move(trace);

    // full-accuracy verification of the final iterate
    try {
      PidGains g = PidGains::from(out.Kp, out.Kd, out.Ki);
      LoopConfig cfg = tau_u ? LoopConfig::feedback_delay(*tau_u) : LoopConfig::nominal();
      out.rec.objective = spectral_abscissa(assemble_pencil(sys, g, cfg), opts.verify);
      out.rec.constraint =
          input_delay_mode ? rho_bkdc(sys, out.Kd) : alpha_bkdc(sys, out.Kd);
      out.rec.feasible =
          out.rec.objective < 0.0 && out.rec.constraint <= 1.0 - kHurwitzMargin;
    } catch (const std::exception&) {
      out.rec.objective = kInf;
      out.rec.constraint = kInf;
      out.rec.feasible = false;
    }
  });

  DesignResult res;
  int best = -1;
  for (int s = 0; s < opts.starts; ++s) {
    const StartRecord& r = outcomes[s].rec;
    res.starts.push_back(r);
    bool better;
    if (best < 0)
      better = true;
    else {
      const StartRecord& b = outcomes[best].rec;
      better = (r.feasible && !b.feasible) ||
               (r.feasible == b.feasible && r.objective < b.objective);
    }
    if (better) best = s;
  }
  res.best_start = best;
  const StartOutcome& win = outcomes[best];
  res.gains = PidGains::from(win.Kp, win.Kd, win.Ki);
  res.objective = win.rec.objective;
  res.alpha_constraint = win.rec.constraint;
  res.feasible = win.rec.feasible;

  // step 4: cut-off selection for the winner
  if (res.feasible) {
    try {
      if (!input_delay_mode) {
        res.T_selected = select_T(sys, res.gains, opts.verify);
      } else {
        double a1 = res.objective;
        for (double T = 1e-2; T >= 1e-12; T *= 0.5) {
          LoopConfig cfg = LoopConfig::with_input_delay(*tau_u, T);
          double aT = spectral_abscissa(assemble_pencil(sys, res.gains, cfg), opts.verify);
          if (aT < 0.0 && aT <= a1 + 0.05 * std::abs(a1)) {
            res.T_selected = T;
            break;
          }
        }
      }
    } catch (const std::exception&) {
    }
    if (!input_delay_mode && !res.T_selected) res.feasible = false;
    if (res.T_selected) res.gains.filter_T = res.T_selected;
  }
  return res;
}

}  // namespace

DesignResult design_pid(const DelaySystem& sys, const DesignOpts& opts) {
  return run_design(sys, opts, false);
}

DesignResult design_input_delay(const DelaySystem& sys, const DesignOpts& opts) {
  if (sys.input_delay && *sys.input_delay == 0.0) {
    DelaySystem plain = sys;
    plain.input_delay.reset();
    return design_pid(plain, opts);  // degenerate input delay
  }
  return run_design(sys, opts, true);
}

std::string DesignResult::to_json() const {
  char buf[48];
  auto fmt = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  auto mat = [&](const Mat& M) {
    std::string s = "[";
    for (int i = 0; i < M.rows(); ++i) {
      if (i) s += ',';
      s += '[';
      for (int j = 0; j < M.cols(); ++j) {
        if (j) s += ',';
        s += fmt(M(i, j));
      }
      s += ']';
    }
    return s + "]";
  };
  std::string out = "{\"Kp\":" + mat(gains.Kp) + ",\"Kd\":" + mat(gains.Kd) +
                    ",\"Ki\":" + mat(gains.Ki);
  out += ",\"objective\":" + fmt(objective);
  out += ",\"alpha_constraint\":" + fmt(alpha_constraint);
  out += ",\"T_selected\":" + (T_selected ? fmt(*T_selected) : std::string("null"));
  out += std::string(",\"feasible\":") + (feasible ? "true" : "false");
  out += ",\"best_start\":" + std::to_string(best_start);
  out += ",\"starts\":[";
  for (size_t s = 0; s < starts.size(); ++s) {
    if (s) out += ',';
    out += "{\"index\":" + std::to_string(starts[s].index);
    out += ",\"objective\":" + fmt(starts[s].objective);
    out += ",\"constraint\":" + fmt(starts[s].constraint);
    out += std::string(",\"feasible\":") + (starts[s].feasible ? "true" : "false");
    out += ",\"trace\":[";
    for (size_t i = 0; i < starts[s].trace.size(); ++i) {
      if (i) out += ',';
      out += fmt(starts[s].trace[i]);
    }
    out += "]}";
  }
  out += "]}\n";
  return out;
}

}  // namespace strongstab
