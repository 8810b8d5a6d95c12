#include "strongstab/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include <lapacke.h>

namespace strongstab {

namespace {

constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Chebyshev collocation pieces (extreme points, differentiation, barycentric)
// ---------------------------------------------------------------------------

struct ChebGrid {
  Vec nodes;  // mapped to [-tau_max, 0], nodes(0) = 0
  Mat D;      // differentiation matrix on the mapped grid
};

ChebGrid cheb_grid(int N, double tau_max) {
  Vec x(N + 1);
  for (int j = 0; j <= N; ++j) x(j) = std::cos(kPi * j / N);
  Vec c = Vec::Ones(N + 1);
  c(0) = 2.0;
  c(N) = 2.0;
  Mat D(N + 1, N + 1);
  for (int i = 0; i <= N; ++i) {
    double rowsum = 0.0;
    for (int j = 0; j <= N; ++j) {
      if (i == j) continue;
      double sgn = ((i + j) % 2 == 0) ? 1.0 : -1.0;
      D(i, j) = (c(i) / c(j)) * sgn / (x(i) - x(j));
      rowsum += D(i, j);
    }
    D(i, i) = -rowsum;
  }
  ChebGrid g;
  g.D = D * (2.0 / tau_max);  // d/dtheta, theta = (x - 1) tau_max / 2
  g.nodes = (x.array() - 1.0) * (tau_max / 2.0);
  return g;
}

Vec bary_row(double theta, const Vec& nodes) {
  const int N = static_cast<int>(nodes.size()) - 1;
  Vec row = Vec::Zero(N + 1);
  for (int j = 0; j <= N; ++j)
    if (std::abs(theta - nodes(j)) < 1e-14 * std::max(1.0, std::abs(nodes(N)))) {
      row(j) = 1.0;
      return row;
    }
  double total = 0.0;
  for (int j = 0; j <= N; ++j) {
    double w = (j % 2 == 0) ? 1.0 : -1.0;
    if (j == 0 || j == N) w *= 0.5;
    row(j) = w / (theta - nodes(j));
    total += row(j);
  }
  return row / total;
}

// ---------------------------------------------------------------------------
// Dense generalized eigenvalues via LAPACK QZ (dggev), eigenvalues only
// ---------------------------------------------------------------------------

std::vector<Complex> generalized_eigenvalues(Mat A, Mat B) {
  const lapack_int n = static_cast<lapack_int>(A.rows());
  std::vector<double> ar(n), ai(n), beta(n);
  double vdummy = 0.0;
  lapack_int info = LAPACKE_dggev(LAPACK_COL_MAJOR, 'N', 'N', n, A.data(), n, B.data(), n,
                                  ar.data(), ai.data(), beta.data(), &vdummy, 1, &vdummy, 1);
  if (info < 0) throw std::runtime_error("dggev: illegal argument");
  std::vector<Complex> ev;
  ev.reserve(n);
  // info > 0 means partial convergence; eigenvalues info..n-1 are still valid
  for (lapack_int i = (info > 0 ? info : 0); i < n; ++i) {
    if (!std::isfinite(ar[i]) || !std::isfinite(ai[i]) || !std::isfinite(beta[i])) continue;
    if (std::abs(beta[i]) < 1e-300) continue;  // infinite eigenvalue
    Complex lam(ar[i] / beta[i], ai[i] / beta[i]);
    if (std::isfinite(lam.real()) && std::isfinite(lam.imag()) && std::abs(lam) < 1e14)
      ev.push_back(lam);
  }
  return ev;
}

// collocation of the linearized delay pencil -> QZ candidates
std::vector<Complex> collocation_eigenvalues(const CharacteristicPencil& pencil, int N) {
  CharacteristicPencil::Linearized lin = pencil.linearize();
  const int D = lin.dim;
  double tau_max = 0.0;
  for (const auto& t : lin.terms) tau_max = std::max(tau_max, t.delay);

  if (tau_max == 0.0) {
    Mat A = Mat::Zero(D, D), B = Mat::Zero(D, D);
    for (const auto& t : lin.terms) {
      if (t.lambda_power == 1)
        B += t.M;
      else
        A -= t.M;
    }
    return generalized_eigenvalues(std::move(A), std::move(B));
  }

  ChebGrid g = cheb_grid(N, tau_max);
  const int total = D * (N + 1);
  Mat A = Mat::Zero(total, total), B = Mat::Zero(total, total);
  // block row 0: the characteristic equation with delayed values interpolated
  for (const auto& t : lin.terms) {
    Vec P = bary_row(-t.delay, g.nodes);
    for (int l = 0; l <= N; ++l) {
      if (P(l) == 0.0) continue;
      if (t.lambda_power == 1)
        B.block(0, l * D, D, D) += P(l) * t.M;
      else
        A.block(0, l * D, D, D) -= P(l) * t.M;
    }
  }
  // block rows 1..N: d/dtheta phi = lambda phi
  for (int j = 1; j <= N; ++j) {
    for (int l = 0; l <= N; ++l)
      A.block(j * D, l * D, D, D) = g.D(j, l) * Mat::Identity(D, D);
    B.block(j * D, j * D, D, D) = Mat::Identity(D, D);
  }
  return generalized_eigenvalues(std::move(A), std::move(B));
}

// ---------------------------------------------------------------------------
// Newton refinement on the nonlinear pencil, bordered system on (v, lambda)
// ---------------------------------------------------------------------------

struct Refined {
  Complex lambda;
  double residual;  // relative to the term scale
  bool converged;
};

std::optional<Refined> newton_refine(const CharacteristicPencil& pencil, Complex lam0,
                                     double tol, int maxit) {
  const int d = pencil.size();
  CVec v;
  double nv = 0.0;
  // inverse iteration for the start vector; a candidate may hit a root so
  // exactly that the LU degenerates, in which case nudge lambda and retry
  for (int attempt = 0; attempt < 3; ++attempt) {
    Complex probe = lam0;
    if (attempt > 0)
      probe += std::pow(10.0, -10 + 3 * attempt) * std::max(1.0, std::abs(lam0)) *
               Complex(1.0, 0.7);
    try {
      CMat F0 = pencil.eval(probe);
      CVec b = CVec::Ones(d);
      for (int i = 0; i < d; ++i) b(i) += Complex(0.0, 1e-3 * (i + 1) / d);
      v = Eigen::PartialPivLU<CMat>(F0).solve(b);
    } catch (const std::domain_error&) {
      return std::nullopt;
    }
    nv = v.norm();
    if (std::isfinite(nv) && nv > 0.0) break;
  }
  if (!std::isfinite(nv) || nv == 0.0) return std::nullopt;
  v /= nv;
  CVec c = v;

  Complex lam = lam0;
  double best = std::numeric_limits<double>::infinity();
  for (int it = 0; it < maxit; ++it) {
    CMat F, dF;
    try {
      F = pencil.eval(lam);
      dF = pencil.deriv(lam);
    } catch (const std::domain_error&) {
      return std::nullopt;
    }
    CVec r = F * v;
    double scale = std::max(pencil.term_scale(lam), 1e-300);
    double res = r.norm() / scale;
    if (!std::isfinite(res)) return std::nullopt;
    best = std::min(best, res);
    if (res <= tol) return Refined{lam, res, true};

    CMat Mb(d + 1, d + 1);
    Mb.topLeftCorner(d, d) = F;
    Mb.block(0, d, d, 1) = dF * v;
    Mb.block(d, 0, 1, d) = c.adjoint();
    Mb(d, d) = 0.0;
    CVec rhs = CVec::Zero(d + 1);
    rhs.head(d) = -r;
    CVec step = Eigen::PartialPivLU<CMat>(Mb).solve(rhs);
    if (!step.allFinite()) break;
    v += step.head(d);
    lam += step(d);
    nv = v.norm();
    if (!std::isfinite(nv) || nv == 0.0) return std::nullopt;
    v /= nv;
    c = v;
  }
  if (best < 1e-6) return Refined{lam, best, false};  // stagnated near a root
  return std::nullopt;
}

bool pencil_is_retarded(const CharacteristicPencil& pencil) { return !pencil.is_neutral(); }

void check_mass(const CharacteristicPencil& pencil) {
  if (!pencil_is_retarded(pencil)) return;
  Mat E = pencil.mass();
  Eigen::JacobiSVD<Mat> svd(E);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 1e-12 * std::max(s(0), 1e-300))
    throw std::runtime_error(
        "singular mass matrix (I - B*Kd*C): neutral/degenerate pencil; no retarded "
        "rightmost-root set exists -- use chain_abscissa for the essential spectrum");
}

}  // namespace

// ---------------------------------------------------------------------------
// rightmost_roots / spectral_abscissa
// ---------------------------------------------------------------------------

RootSet rightmost_roots(const CharacteristicPencil& pencil, const SolverOpts& opts) {
  opts.validate();
  check_mass(pencil);

  std::vector<Complex> cands = collocation_eigenvalues(pencil, opts.N);
  std::sort(cands.begin(), cands.end(),
            [](Complex a, Complex b) { return a.real() > b.real(); });

  const bool has_delay = pencil.max_delay() > 0.0;
  double sigma_hat = cands.empty() ? 0.0 : cands.front().real();
  double re_min, im_max;
  if (opts.re_min)
    re_min = *opts.re_min;
  else
    re_min = has_delay ? -5.0 * std::max(0.5, std::abs(sigma_hat))
                       : -std::numeric_limits<double>::infinity();
  if (opts.im_max)
    im_max = *opts.im_max;
  else {
    std::optional<double> tau_min = pencil.min_positive_delay();
    im_max = tau_min ? 50.0 / *tau_min : std::numeric_limits<double>::infinity();
  }

  std::vector<Complex> roots;
  std::vector<double> residuals;
  std::vector<bool> conv;
  auto known = [&](Complex lam) {
    for (Complex r : roots)
      if (std::abs(lam - r) <= 1e-6 * std::max(1.0, std::abs(r))) return true;
    return false;
  };

  int refined = 0;
  const int cap = 600;
  const double re_gate = std::isinf(re_min) ? re_min : re_min - 0.5 * std::abs(re_min) - 1.0;
  const double im_gate = std::isinf(im_max) ? im_max : 1.1 * im_max + 10.0;
  for (Complex lam0 : cands) {
    if (refined >= cap) break;
    if (lam0.real() < re_gate || std::abs(lam0.imag()) > im_gate) continue;
    ++refined;
    std::optional<Refined> r = newton_refine(pencil, lam0, opts.newton_tol, opts.max_newton);
    if (!r) continue;
    if (known(r->lambda)) continue;
    roots.push_back(r->lambda);
    residuals.push_back(r->residual);
    conv.push_back(r->converged);
  }

  // keep the reporting window, preserve everything for the abscissa caller
  RootSet out;
  out.discretization_N = opts.N;
  std::vector<int> order(roots.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (roots[a].real() != roots[b].real()) return roots[a].real() > roots[b].real();
    return roots[a].imag() > roots[b].imag();
  });
  for (int i : order) {
    if (roots[i].real() < re_min || std::abs(roots[i].imag()) > im_max) continue;
    out.roots.push_back(roots[i]);
    out.residuals.push_back(residuals[i]);
    out.converged.push_back(conv[i]);
  }
  return out;
}

double spectral_abscissa(const CharacteristicPencil& pencil, const SolverOpts& opts) {
  SolverOpts o = opts;
  for (int attempt = 0; attempt < 2; ++attempt) {
    RootSet rs = rightmost_roots(pencil, o);
    for (size_t i = 0; i < rs.roots.size(); ++i)
      if (rs.converged[i]) return rs.roots[i].real();  // sorted by descending Re
    // widen once before giving up
    o.N = o.N + 20;
    if (o.re_min) *o.re_min *= 4.0;
    if (o.im_max) *o.im_max *= 4.0;
  }
  throw std::runtime_error("spectral_abscissa: no converged characteristic root found");
}

// ---------------------------------------------------------------------------
// Argument-principle root counting on a rectangle
// ---------------------------------------------------------------------------

namespace {

struct DetSample {
  double phase;    // arg det F in (-pi, pi]
  double log_abs;  // log |det F|
};

DetSample det_sample(const CharacteristicPencil& pencil, Complex lam) {
  CMat F = pencil.eval(lam);
  Eigen::PartialPivLU<CMat> lu(F);
  double phase = (lu.permutationP().determinant() > 0) ? 0.0 : kPi;
  double log_abs = 0.0;
  for (int i = 0; i < F.rows(); ++i) {
    Complex u = lu.matrixLU()(i, i);
    phase += std::arg(u);
    log_abs += std::log(std::abs(u));
  }
  phase = std::remainder(phase, 2.0 * kPi);
  return {phase, log_abs};
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * kPi); }

}  // namespace

int count_rhp_roots(const CharacteristicPencil& pencil, const Rect& rect) {
  if (!(rect.re_lo < rect.re_hi) || !(rect.im_lo < rect.im_hi))
    throw std::invalid_argument("count_rhp_roots: empty rectangle");
  const Complex c1(rect.re_lo, rect.im_lo), c2(rect.re_hi, rect.im_lo),
      c3(rect.re_hi, rect.im_hi), c4(rect.re_lo, rect.im_hi);
  const Complex corners[5] = {c1, c2, c3, c4, c1};

  double winding = 0.0;
  for (int e = 0; e < 4; ++e) {
    const Complex a = corners[e], b = corners[e + 1];
    // Adaptive subdivision. Phase steps are capped at pi/2; a near-boundary
    // root also shows up as a dip of |det|, so large log-magnitude steps are
    // refined too (a full aliased 2pi swing otherwise wraps to ~0).
    struct Node {
      double t;
      DetSample s;
    };
    std::vector<Node> nodes;
    const int init = 33;
    double max_log = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < init; ++i) {
      double t = static_cast<double>(i) / (init - 1);
      nodes.push_back({t, det_sample(pencil, a + (b - a) * t)});
      max_log = std::max(max_log, nodes.back().s.log_abs);
    }
    bool done = false;
    int rounds = 0;
    while (!done && rounds++ < 48) {
      done = true;
      std::vector<Node> next;
      next.reserve(nodes.size() * 2);
      for (size_t i = 0; i + 1 < nodes.size(); ++i) {
        next.push_back(nodes[i]);
        double dphi = wrap_angle(nodes[i + 1].s.phase - nodes[i].s.phase);
        double dlog = nodes[i + 1].s.log_abs - nodes[i].s.log_abs;
        if ((std::abs(dphi) > kPi / 2.0 || std::abs(dlog) > 0.7) &&
            nodes[i + 1].t - nodes[i].t > 1e-13) {
          double tm = 0.5 * (nodes[i].t + nodes[i + 1].t);
          next.push_back({tm, det_sample(pencil, a + (b - a) * tm)});
          max_log = std::max(max_log, next.back().s.log_abs);
          done = false;
        }
      }
      next.push_back(nodes.back());
      nodes = std::move(next);
      if (nodes.size() > 400000)
        throw std::runtime_error(
            "count_rhp_roots: boundary sampling does not settle; a root lies on or "
            "extremely close to the rectangle boundary -- inflate the rectangle");
    }
    if (!done)
      throw std::runtime_error(
          "count_rhp_roots: a root lies on or extremely close to the rectangle boundary -- "
          "inflate the rectangle");
    for (const Node& nd : nodes)
      if (nd.s.log_abs < max_log - 69.0)  // |det| collapsed by 1e-30: boundary root
        throw std::runtime_error(
            "count_rhp_roots: |det| vanishes on the rectangle boundary -- a root lies on "
            "it; inflate the rectangle");
    for (size_t i = 0; i + 1 < nodes.size(); ++i)
      winding += wrap_angle(nodes[i + 1].s.phase - nodes[i].s.phase);
  }
  double cycles = winding / (2.0 * kPi);
  long count = std::lround(cycles);
  if (std::abs(cycles - count) > 0.25)
    throw std::runtime_error("count_rhp_roots: winding number failed to converge to an integer");
  if (count < 0)
    throw std::runtime_error("count_rhp_roots: negative winding (pole inside rectangle?)");
  return static_cast<int>(count);
}

// ---------------------------------------------------------------------------
// Matrix spectrum helpers
// ---------------------------------------------------------------------------

std::pair<double, double> matrix_alpha_rho(const Mat& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("matrix_alpha_rho: matrix not square");
  if (M.rows() == 0) return {0.0, 0.0};
  Eigen::EigenSolver<Mat> es(M, /*computeEigenvectors=*/false);
  double alpha = -std::numeric_limits<double>::infinity(), rho = 0.0;
  for (int i = 0; i < M.rows(); ++i) {
    alpha = std::max(alpha, es.eigenvalues()(i).real());
    rho = std::max(rho, std::abs(es.eigenvalues()(i)));
  }
  return {alpha, rho};
}

std::vector<Complex> bkdc_eigenvalues(const DelaySystem& sys, const Mat& Kd) {
  Mat small = Kd * sys.C * sys.B;  // m x m, shares the nonzero spectrum with B Kd C
  std::vector<Complex> eigs;
  if (small.rows() > 0) {
    Eigen::EigenSolver<Mat> es(small, false);
    for (int i = 0; i < small.rows(); ++i) eigs.push_back(es.eigenvalues()(i));
  }
  for (int i = sys.m; i < sys.n; ++i) eigs.emplace_back(0.0, 0.0);
  return eigs;
}

double chain_abscissa(const DelaySystem& sys, const PidGains& gains, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("chain_abscissa: r must be positive");
  if ((sys.B * gains.Kd * sys.C).norm() == 0.0)
    throw std::domain_error("chain_abscissa: B*Kd*C is zero, no neutral chain");
  double rho = 0.0;
  for (Complex e : bkdc_eigenvalues(sys, gains.Kd)) rho = std::max(rho, std::abs(e));
  if (rho == 0.0)
    throw std::domain_error(
        "chain_abscissa: rho(B*Kd*C) = 0 (nilpotent product), chain escapes to -infinity");
  return std::log(rho) / r;
}

double rhp_modulus_bound(const CharacteristicPencil& pencil, double re_floor) {
  Mat E = pencil.mass();
  Eigen::JacobiSVD<Mat> svd(E);
  const Vec& s = svd.singularValues();
  double smin = s(s.size() - 1);
  if (smin <= 1e-12 * std::max(1.0, s(0)))
    throw std::invalid_argument("rhp_modulus_bound: singular mass matrix (neutral pencil)");

  double rhs = 0.0;
  for (const PencilTerm& t : pencil.terms()) {
    if (t.shape.lambda_power == 1 && t.shape.delay == 0.0 && t.shape.fd_r.empty() &&
        t.shape.lp_T.empty())
      continue;  // part of the mass
    if (t.shape.lambda_power == 1 && t.shape.delay > 0.0 && t.shape.fd_r.empty() &&
        t.shape.lp_T.empty())
      throw std::invalid_argument("rhp_modulus_bound: neutral delayed-mass term");
    double factor = std::exp(-re_floor * t.shape.delay);
    for (double r : t.shape.fd_r)
      factor *= (1.0 + std::exp(std::max(0.0, -re_floor) * r)) / r;  // |lambda fd| bound
    for (double T : t.shape.lp_T) {
      double den = 1.0 + re_floor * T;
      if (den <= 0.0)
        throw std::invalid_argument("rhp_modulus_bound: re_floor crosses the filter pole");
      factor *= (t.shape.lambda_power == 1) ? std::max(1.0, std::abs(re_floor * T) / den) / T
                                            : 1.0 / den;
    }
    rhs += t.M.operatorNorm() * factor;
  }
  return rhs / smin + 1.0;
}

// ---------------------------------------------------------------------------
// RootSet serialization
// ---------------------------------------------------------------------------

namespace {
std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}
}  // namespace

std::string RootSet::to_json() const {
  std::string out = "{\"roots\":[";
  for (size_t i = 0; i < roots.size(); ++i) {
    if (i) out += ',';
    out += '[' + fmt17(roots[i].real()) + ',' + fmt17(roots[i].imag()) + ']';
  }
  out += "],\"residuals\":[";
  for (size_t i = 0; i < residuals.size(); ++i) {
    if (i) out += ',';
    out += fmt17(residuals[i]);
  }
  out += "],\"N\":" + std::to_string(discretization_N) + "}\n";
  return out;
}

std::string RootSet::to_csv() const {
  std::string out = "re,im,residual\r\n";
  for (size_t i = 0; i < roots.size(); ++i)
    out += fmt17(roots[i].real()) + "," + fmt17(roots[i].imag()) + "," +
           fmt17(residuals[i]) + "\r\n";
  return out;
}

}  // namespace strongstab
