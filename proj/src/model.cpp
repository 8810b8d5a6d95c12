#include "strongstab/model.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace strongstab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// DelaySystem / PidGains
// ---------------------------------------------------------------------------

void DelaySystem::validate() const {
  if (n <= 0 || m <= 0 || p <= 0) throw LoadError("system dimensions must be positive");
  if (A.size() != delays.size() + 1)
    throw LoadError("expected " + std::to_string(delays.size() + 1) + " A matrices, got " +
                    std::to_string(A.size()));
  for (const Mat& Ak : A)
    if (Ak.rows() != n || Ak.cols() != n) throw LoadError("A matrix is not n x n");
  if (B.rows() != n || B.cols() != m) throw LoadError("B is not n x m");
  if (C.rows() != p || C.cols() != n) throw LoadError("C is not p x n");

  double prev = 0.0;
  for (double tau : delays) {
    if (!(tau > prev))
      throw LoadError("delays must be strictly increasing and positive");
    prev = tau;
  }
  if (input_delay && *input_delay < 0.0) throw LoadError("input_delay must be nonnegative");

  Eigen::JacobiSVD<Mat> svd_b(B);
  if (svd_b.rank() < m) throw LoadError("B is rank deficient (needs full column rank)");
  Eigen::JacobiSVD<Mat> svd_c(C);
  if (svd_c.rank() < p) throw LoadError("C is rank deficient (needs full row rank)");
}

RankFactorization rank_factorize(const Mat& Ki, double tol) {
  if (tol <= 0.0) throw std::invalid_argument("rank_factorize: tol must be positive");
  const int m = static_cast<int>(Ki.rows());
  const int p = static_cast<int>(Ki.cols());
  Eigen::JacobiSVD<Mat> svd(Ki, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  int q = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    for (int i = 0; i < s.size(); ++i)
      if (s(i) > tol * s(0)) ++q;
  }
  RankFactorization f;
  f.q = q;
  f.Ui = Mat(m, q);
  f.Vi = Mat(q, p);
  for (int i = 0; i < q; ++i) {
    f.Ui.col(i) = svd.matrixU().col(i) * s(i);
    f.Vi.row(i) = svd.matrixV().col(i).transpose();
  }
  return f;
}

PidGains PidGains::from(Mat Kp, Mat Kd, Mat Ki, std::optional<double> filter_T,
                        double rank_tol) {
  if (Kp.rows() != Kd.rows() || Kp.rows() != Ki.rows() || Kp.cols() != Kd.cols() ||
      Kp.cols() != Ki.cols())
    throw std::invalid_argument("gain matrices must share the same m x p shape");
  if (filter_T && *filter_T <= 0.0)
    throw std::invalid_argument("filter constant T must be positive");
  PidGains g;
  g.Kp = std::move(Kp);
  g.Kd = std::move(Kd);
  g.Ki = std::move(Ki);
  RankFactorization f = rank_factorize(g.Ki, rank_tol);
  g.rank_q = f.q;
  g.Ui = std::move(f.Ui);
  g.Vi = std::move(f.Vi);
  g.filter_T = filter_T;
  return g;
}

// ---------------------------------------------------------------------------
// Perturbations and shape functions
// ---------------------------------------------------------------------------

namespace {

// (1 - exp(-u)) / u with the removable singularity at u = 0 evaluated by a
// 6-term series when |u| < 1e-4 (cancellation guard).
Complex fd_kernel_u(Complex u) {
  if (std::abs(u) < 1e-4) {
    // 1 - u/2 + u^2/6 - u^3/24 + u^4/120 - u^5/720
    Complex acc(1.0, 0.0), pw(1.0, 0.0);
    const double fact[] = {2.0, 6.0, 24.0, 120.0, 720.0};
    double sign = -1.0;
    for (double f : fact) {
      pw *= u;
      acc += sign * pw / f;
      sign = -sign;
    }
    return acc;
  }
  return (1.0 - std::exp(-u)) / u;
}

// d/du of the above.
Complex fd_kernel_u_deriv(Complex u) {
  if (std::abs(u) < 1e-4) {
    // -1/2 + u/3 - u^2/8 + u^3/30 - u^4/144
    Complex acc(-0.5, 0.0), pw(1.0, 0.0);
    const double coef[] = {1.0 / 3.0, -1.0 / 8.0, 1.0 / 30.0, -1.0 / 144.0};
    for (double c : coef) {
      pw *= u;
      acc += c * pw;
    }
    return acc;
  }
  Complex e = std::exp(-u);
  return (u * e - (1.0 - e)) / (u * u);
}

}  // namespace

Complex PerturbationFn::kernel(Complex lambda) const {
  switch (kind) {
    case PerturbationKind::Identity:
      return 1.0;
    case PerturbationKind::DelayExp:
      return std::exp(-lambda * r);
    case PerturbationKind::FiniteDiffKernel:
      return fd_kernel_u(lambda * r);
    case PerturbationKind::LowPassKernel: {
      Complex den = lambda * r + 1.0;
      if (std::abs(den) <= 1e-14 * std::max(1.0, std::abs(lambda * r)))
        throw std::domain_error("perturbation kernel evaluated at its pole lambda = -1/r");
      return 1.0 / den;
    }
  }
  throw std::logic_error("unknown perturbation kind");
}

Complex PerturbationFn::kernel_deriv(Complex lambda) const {
  switch (kind) {
    case PerturbationKind::Identity:
      return 0.0;
    case PerturbationKind::DelayExp:
      return -r * std::exp(-lambda * r);
    case PerturbationKind::FiniteDiffKernel:
      return r * fd_kernel_u_deriv(lambda * r);
    case PerturbationKind::LowPassKernel: {
      Complex den = lambda * r + 1.0;
      return -r / (den * den);
    }
  }
  throw std::logic_error("unknown perturbation kind");
}

bool PerturbationFn::full_rank_for_all_lambda() const {
  return !(kind == PerturbationKind::FiniteDiffKernel && r > 0.0);
}

Complex ShapeFn::eval(Complex lambda) const {
  Complex v = lambda_power == 1 ? lambda : Complex(1.0, 0.0);
  if (delay != 0.0) v *= std::exp(-lambda * delay);
  for (double r : fd_r) v *= fd_kernel_u(lambda * r);
  for (double T : lp_T) {
    Complex den = lambda * T + 1.0;
    if (std::abs(den) <= 1e-14 * std::max(1.0, std::abs(lambda * T)))
      throw std::domain_error("pencil shape evaluated at the filter pole lambda = -1/T");
    v /= den;
  }
  return v;
}

Complex ShapeFn::deriv(Complex lambda) const {
  // product rule over the factors; lambda_power<=1 keeps this 1/lambda free
  std::vector<Complex> f, df;
  if (lambda_power == 1) {
    f.push_back(lambda);
    df.push_back(1.0);
  }
  if (delay != 0.0) {
    Complex e = std::exp(-lambda * delay);
    f.push_back(e);
    df.push_back(-delay * e);
  }
  for (double r : fd_r) {
    f.push_back(fd_kernel_u(lambda * r));
    df.push_back(r * fd_kernel_u_deriv(lambda * r));
  }
  for (double T : lp_T) {
    Complex den = lambda * T + 1.0;
    if (std::abs(den) <= 1e-14 * std::max(1.0, std::abs(lambda * T)))
      throw std::domain_error("pencil shape derivative at the filter pole lambda = -1/T");
    f.push_back(1.0 / den);
    df.push_back(-T / (den * den));
  }
  Complex total = 0.0;
  for (size_t i = 0; i < f.size(); ++i) {
    Complex prod = df[i];
    for (size_t j = 0; j < f.size(); ++j)
      if (j != i) prod *= f[j];
    total += prod;
  }
  return total;
}

double ShapeFn::magnitude(Complex lambda) const { return std::abs(eval(lambda)); }

// ---------------------------------------------------------------------------
// LoopConfig constructors
// ---------------------------------------------------------------------------

LoopConfig LoopConfig::nominal() { return {}; }

LoopConfig LoopConfig::feedback_delay(double r) {
  if (r < 0.0) throw std::invalid_argument("feedback delay r must be nonnegative");
  LoopConfig c;
  c.variant = Variant::FeedbackDelay;
  c.r = r;
  return c;
}

LoopConfig LoopConfig::finite_difference(double r) {
  if (r < 0.0) throw std::invalid_argument("finite-difference step r must be nonnegative");
  LoopConfig c;
  c.variant = Variant::FiniteDifference;
  c.r = r;
  return c;
}

LoopConfig LoopConfig::low_pass(double T) {
  if (T < 0.0) throw std::invalid_argument("filter constant T must be nonnegative");
  LoopConfig c;
  c.variant = Variant::LowPass;
  c.T = T;
  return c;
}

LoopConfig LoopConfig::general_perturbed(double T, PerturbationFn R1, PerturbationFn R2,
                                         PerturbationFn R3) {
  if (T < 0.0) throw std::invalid_argument("filter constant T must be nonnegative");
  LoopConfig c;
  c.variant = Variant::GeneralPerturbed;
  c.T = T;
  c.R1 = R1;
  c.R2 = R2;
  c.R3 = R3;
  return c;
}

LoopConfig LoopConfig::no_kd_perturbed(PerturbationFn R1, PerturbationFn R2,
                                       PerturbationFn R3) {
  LoopConfig c;
  c.variant = Variant::NoKdPerturbed;
  c.R1 = R1;
  c.R2 = R2;
  c.R3 = R3;
  return c;
}

LoopConfig LoopConfig::with_input_delay(double tau_u, std::optional<double> T,
                                        PerturbationFn R1, PerturbationFn R2,
                                        PerturbationFn R3) {
  if (tau_u < 0.0) throw std::invalid_argument("input delay must be nonnegative");
  if (T && *T < 0.0) throw std::invalid_argument("filter constant T must be nonnegative");
  LoopConfig c;
  c.variant = Variant::InputDelay;
  c.tau_u = tau_u;
  c.T = T;
  c.R1 = R1;
  c.R2 = R2;
  c.R3 = R3;
  return c;
}

// ---------------------------------------------------------------------------
// CharacteristicPencil
// ---------------------------------------------------------------------------

CharacteristicPencil::CharacteristicPencil(int size, std::vector<PencilTerm> terms)
    : size_(size), terms_(std::move(terms)) {
  for (const PencilTerm& t : terms_) {
    if (t.M.rows() != size_ || t.M.cols() != size_)
      throw std::invalid_argument("pencil term has inconsistent size");
    if (t.shape.lambda_power < 0 || t.shape.lambda_power > 1)
      throw std::invalid_argument("pencil shapes are at most linear in lambda");
    if (!t.shape.fd_r.empty() && t.shape.lambda_power != 1)
      throw std::invalid_argument("finite-difference kernel requires the lambda factor");
  }
}

CMat CharacteristicPencil::eval(Complex lambda) const {
  CMat F = CMat::Zero(size_, size_);
  for (const PencilTerm& t : terms_) F += t.shape.eval(lambda) * t.M;
  return F;
}

CMat CharacteristicPencil::deriv(Complex lambda) const {
  CMat F = CMat::Zero(size_, size_);
  for (const PencilTerm& t : terms_) F += t.shape.deriv(lambda) * t.M;
  return F;
}

double CharacteristicPencil::term_scale(Complex lambda) const {
  double s = 0.0;
  for (const PencilTerm& t : terms_) s += t.M.norm() * t.shape.magnitude(lambda);
  return s;
}

Mat CharacteristicPencil::mass() const {
  Mat E = Mat::Zero(size_, size_);
  for (const PencilTerm& t : terms_)
    if (t.shape.lambda_power == 1 && t.shape.delay == 0.0 && t.shape.fd_r.empty() &&
        t.shape.lp_T.empty())
      E += t.M;
  return E;
}

bool CharacteristicPencil::is_neutral() const {
  for (const PencilTerm& t : terms_)
    if (t.shape.lambda_power == 1 && t.shape.delay > 0.0 && t.shape.lp_T.empty())
      return true;
  return false;
}

double CharacteristicPencil::max_delay() const {
  double d = 0.0;
  for (const PencilTerm& t : terms_) {
    double total = t.shape.delay;
    for (double r : t.shape.fd_r) total += r;  // expansion introduces delay + r
    d = std::max(d, total);
  }
  return d;
}

std::optional<double> CharacteristicPencil::min_positive_delay() const {
  std::optional<double> d;
  for (const PencilTerm& t : terms_) {
    for (double tau : {t.shape.delay, t.shape.delay + (t.shape.fd_r.empty() ? 0.0 : t.shape.fd_r[0])})
      if (tau > 0.0 && (!d || tau < *d)) d = tau;
  }
  return d;
}

CharacteristicPencil::Linearized CharacteristicPencil::linearize() const {
  // Step 1: expand finite-difference kernels,
  //   lambda * fd(r) * rest = (1/r) * rest - (1/r) e^{-lambda r} * rest.
  struct FlatTerm {
    Mat M;
    int a;
    double delay;
    std::vector<double> lp;
    std::optional<std::pair<Mat, Mat>> lowrank;
  };
  std::vector<FlatTerm> flat;
  for (const PencilTerm& t : terms_) {
    if (t.shape.fd_r.size() > 1)
      throw std::invalid_argument("at most one finite-difference kernel per term");
    if (t.shape.fd_r.empty()) {
      flat.push_back({t.M, t.shape.lambda_power, t.shape.delay, t.shape.lp_T, t.lowrank});
    } else {
      const double r = t.shape.fd_r[0];
      if (r == 0.0) {
        flat.push_back({t.M, t.shape.lambda_power, t.shape.delay, t.shape.lp_T, t.lowrank});
      } else {
        auto scaled_lowrank = [&](double c) -> std::optional<std::pair<Mat, Mat>> {
          if (!t.lowrank) return std::nullopt;
          return std::make_pair(Mat(c * t.lowrank->first), t.lowrank->second);
        };
        flat.push_back({t.M / r, 0, t.shape.delay, t.shape.lp_T, scaled_lowrank(1.0 / r)});
        flat.push_back({-t.M / r, 0, t.shape.delay + r, t.shape.lp_T, scaled_lowrank(-1.0 / r)});
      }
    }
  }

  // Step 2: replace each low-pass chain by auxiliary variables,
  //   z1 = lambda^a/(lambda T1 + 1) (R x),  z_{j+1} = z_j/(lambda T_{j+1} + 1),
  // and couple L e^{-lambda tau} z_last back into the original rows.
  int dim = size_;
  std::vector<LinearTerm> out;
  auto put = [&](Mat M, int a, double delay) { out.push_back({std::move(M), a, delay}); };

  std::vector<FlatTerm> needs_aux;
  for (FlatTerm& ft : flat) {
    bool rational = false;
    for (double T : ft.lp) rational |= (T != 0.0);
    if (rational)
      needs_aux.push_back(std::move(ft));
    else
      put(std::move(ft.M), ft.a, ft.delay);
  }
  struct AuxPlan {
    const FlatTerm* term;
    Mat L, R;
    int offset;  // first aux block start
    int width;
    int chain;
  };
  std::vector<AuxPlan> plans;
  for (const FlatTerm& ft : needs_aux) {
    Mat L, R;
    if (ft.lowrank) {
      L = ft.lowrank->first;
      R = ft.lowrank->second;
    } else {
      L = ft.M;
      R = Mat::Identity(size_, size_);
    }
    int chain = 0;
    for (double T : ft.lp)
      if (T != 0.0) ++chain;
    const int width = static_cast<int>(L.cols());
    plans.push_back({&ft, std::move(L), std::move(R), dim, width, chain});
    dim += width * chain;
  }

  // widen already-emitted matrices to the final dimension
  for (LinearTerm& lt : out) {
    Mat M = Mat::Zero(dim, dim);
    M.topLeftCorner(size_, size_) = lt.M;
    lt.M = std::move(M);
  }

  for (const AuxPlan& plan : plans) {
    const FlatTerm& ft = *plan.term;
    const int w = plan.width;
    std::vector<double> chainT;
    for (double T : ft.lp)
      if (T != 0.0) chainT.push_back(T);

    int z0 = plan.offset;
    // first stage: (lambda T1 + 1) z1 - lambda^a (R x) = 0
    {
      Mat M1 = Mat::Zero(dim, dim);
      M1.block(z0, z0, w, w) = chainT[0] * Mat::Identity(w, w);
      M1.block(z0, 0, w, size_) = (ft.a == 1) ? Mat(-plan.R) : Mat::Zero(w, size_);
      put(std::move(M1), 1, 0.0);
      Mat M0 = Mat::Zero(dim, dim);
      M0.block(z0, z0, w, w) = Mat::Identity(w, w);
      if (ft.a == 0) M0.block(z0, 0, w, size_) = -plan.R;
      put(std::move(M0), 0, 0.0);
    }
    // remaining stages: (lambda Tj + 1) z_j - z_{j-1} = 0
    for (size_t j = 1; j < chainT.size(); ++j) {
      int zj = z0 + static_cast<int>(j) * w;
      int zp = zj - w;
      Mat M1 = Mat::Zero(dim, dim);
      M1.block(zj, zj, w, w) = chainT[j] * Mat::Identity(w, w);
      put(std::move(M1), 1, 0.0);
      Mat M0 = Mat::Zero(dim, dim);
      M0.block(zj, zj, w, w) = Mat::Identity(w, w);
      M0.block(zj, zp, w, w) = -Mat::Identity(w, w);
      put(std::move(M0), 0, 0.0);
    }
    // coupling of the filtered signal back into the plant rows
    int zlast = z0 + static_cast<int>(chainT.size() - 1) * w;
    Mat Mc = Mat::Zero(dim, dim);
    Mc.block(0, zlast, size_, w) = plan.L;
    put(std::move(Mc), 0, ft.delay);
  }

  return {dim, std::move(out)};
}

// ---------------------------------------------------------------------------
// assemble_pencil
// ---------------------------------------------------------------------------

namespace {

// kernel factors of a scalar perturbation, appended onto a base shape
void apply_kernel(ShapeFn& shape, const PerturbationFn& R) {
  switch (R.kind) {
    case PerturbationKind::Identity:
      return;
    case PerturbationKind::DelayExp:
      shape.delay += R.r;
      return;
    case PerturbationKind::FiniteDiffKernel:
      if (R.r != 0.0) shape.fd_r.push_back(R.r);
      return;
    case PerturbationKind::LowPassKernel:
      if (R.r != 0.0) shape.lp_T.push_back(R.r);
      return;
  }
}

struct Blocks {
  int n, q, d;
  Mat mass_nominal;  // diag(I - B Kd C, I_q)
  Mat eye;           // I_{n+q}
  Mat A0_blk;        // [[A0, 0], [0, 0]]
  Mat A0_vic;        // [[A0, 0], [Vi C, 0]]
  Mat Ahat;          // [[A0 + B Kp C, B Ui], [Vi C, 0]]
  Mat kd_blk;        // [[B Kd C, 0], [0, 0]]
  Mat kp_blk;        // [[B Kp C, B Ui], [0, 0]]
  Mat kp_only;       // [[B Kp C, 0], [0, 0]]
  Mat bui_blk;       // [[0, B Ui], [0, 0]]
  Mat vic_blk;       // [[0, 0], [Vi C, 0]]
  Mat BKd;           // [B Kd; 0]  (d x p)
  Mat Ctil;          // [C, 0]     (p x d)
  std::vector<Mat> Ak_blk;
};

Blocks make_blocks(const DelaySystem& sys, const PidGains& gains) {
  Blocks b;
  b.n = sys.n;
  b.q = gains.rank_q;
  b.d = sys.n + gains.rank_q;
  const int n = b.n, q = b.q, d = b.d;

  Mat BKpC = sys.B * gains.Kp * sys.C;
  Mat BKdC = sys.B * gains.Kd * sys.C;
  Mat BUi = sys.B * gains.Ui;
  Mat ViC = gains.Vi * sys.C;

  b.eye = Mat::Identity(d, d);
  b.mass_nominal = Mat::Identity(d, d);
  b.mass_nominal.topLeftCorner(n, n) -= BKdC;

  auto blk = [&](auto fill) {
    Mat M = Mat::Zero(d, d);
    fill(M);
    return M;
  };
  b.A0_blk = blk([&](Mat& M) { M.topLeftCorner(n, n) = sys.A[0]; });
  b.A0_vic = blk([&](Mat& M) {
    M.topLeftCorner(n, n) = sys.A[0];
    M.bottomLeftCorner(q, n) = ViC;
  });
  b.Ahat = blk([&](Mat& M) {
    M.topLeftCorner(n, n) = sys.A[0] + BKpC;
    M.topRightCorner(n, q) = BUi;
    M.bottomLeftCorner(q, n) = ViC;
  });
  b.kd_blk = blk([&](Mat& M) { M.topLeftCorner(n, n) = BKdC; });
  b.kp_blk = blk([&](Mat& M) {
    M.topLeftCorner(n, n) = BKpC;
    M.topRightCorner(n, q) = BUi;
  });
  b.kp_only = blk([&](Mat& M) { M.topLeftCorner(n, n) = BKpC; });
  b.bui_blk = blk([&](Mat& M) { M.topRightCorner(n, q) = BUi; });
  b.vic_blk = blk([&](Mat& M) { M.bottomLeftCorner(q, n) = ViC; });

  b.BKd = Mat::Zero(d, sys.p);
  b.BKd.topRows(n) = sys.B * gains.Kd;
  b.Ctil = Mat::Zero(sys.p, d);
  b.Ctil.leftCols(n) = sys.C;

  for (int k = 1; k <= sys.K(); ++k)
    b.Ak_blk.push_back(blk([&](Mat& M) { M.topLeftCorner(n, n) = sys.A[k]; }));
  return b;
}

void check_perturbation_dims(const DelaySystem& sys, const LoopConfig& cfg) {
  auto is_id = [](const PerturbationFn& R) { return R.kind == PerturbationKind::Identity; };
  if (!is_id(cfg.R1) && cfg.R1.dim != sys.m)
    throw std::invalid_argument("R1 must act on the input (dim m)");
  if ((!is_id(cfg.R2) && cfg.R2.dim != sys.p) || (!is_id(cfg.R3) && cfg.R3.dim != sys.p))
    throw std::invalid_argument("R2 and R3 must act on the output (dim p)");
  if (!cfg.R1.full_rank_for_all_lambda() || !cfg.R3.full_rank_for_all_lambda())
    throw std::invalid_argument(
        "R1 and R3 must be full rank for all lambda; the finite-difference kernel is only "
        "admissible as R2");
}

}  // namespace

CharacteristicPencil assemble_pencil(const DelaySystem& sys, const PidGains& gains,
                                     const LoopConfig& cfg) {
  sys.validate();
  if (gains.Kp.rows() != sys.m || gains.Kp.cols() != sys.p)
    throw std::invalid_argument("gain matrices must be m x p");
  Blocks b = make_blocks(sys, gains);
  std::vector<PencilTerm> terms;
  auto add = [&](Mat M, ShapeFn s,
                 std::optional<std::pair<Mat, Mat>> lowrank = std::nullopt) {
    terms.push_back({std::move(M), std::move(s), std::move(lowrank)});
  };
  auto add_delays = [&](void) {
    for (int k = 1; k <= sys.K(); ++k)
      add(-b.Ak_blk[k - 1], ShapeFn::exp_delay(sys.delays[k - 1]));
  };

  using V = LoopConfig::Variant;
  switch (cfg.variant) {
    case V::Nominal: {
      add(b.mass_nominal, ShapeFn::lambda());
      add(-b.Ahat, ShapeFn::constant());
      add_delays();
      break;
    }
    case V::FeedbackDelay: {
      add(b.eye, ShapeFn::lambda());
      add(-b.kd_blk, ShapeFn::lambda_exp(cfg.r));
      add(-b.A0_vic, ShapeFn::constant());
      add(-b.kp_blk, ShapeFn::exp_delay(cfg.r));
      add_delays();
      break;
    }
    case V::FiniteDifference: {
      add(b.eye, ShapeFn::lambda());
      ShapeFn s = ShapeFn::lambda();
      if (cfg.r != 0.0) s.fd_r.push_back(cfg.r);
      add(-b.kd_blk, s);
      add(-b.Ahat, ShapeFn::constant());
      add_delays();
      break;
    }
    case V::LowPass: {
      add(b.eye, ShapeFn::lambda());
      ShapeFn s = ShapeFn::lambda();
      if (*cfg.T != 0.0) s.lp_T.push_back(*cfg.T);
      add(-b.kd_blk, s, std::make_pair(Mat(-b.BKd), b.Ctil));
      add(-b.Ahat, ShapeFn::constant());
      add_delays();
      break;
    }
    case V::GeneralPerturbed: {
      check_perturbation_dims(sys, cfg);
      add(b.eye, ShapeFn::lambda());
      add(-b.A0_blk, ShapeFn::constant());
      add_delays();
      // - [B R1, 0; 0, Iq] [Kp + lam/(lam T+1) Kd R2, Ui; Vi, 0] [R3 C, 0; 0, Iq]
      ShapeFn s_kp = ShapeFn::constant();
      apply_kernel(s_kp, cfg.R1);
      apply_kernel(s_kp, cfg.R3);
      add(-b.kp_only, s_kp);
      ShapeFn s_ui = ShapeFn::constant();
      apply_kernel(s_ui, cfg.R1);
      add(-b.bui_blk, s_ui);
      ShapeFn s_vic = ShapeFn::constant();
      apply_kernel(s_vic, cfg.R3);
      add(-b.vic_blk, s_vic);
      ShapeFn s_kd = ShapeFn::lambda();
      if (*cfg.T != 0.0) s_kd.lp_T.push_back(*cfg.T);
      apply_kernel(s_kd, cfg.R1);
      apply_kernel(s_kd, cfg.R2);
      apply_kernel(s_kd, cfg.R3);
      add(-b.kd_blk, s_kd, std::make_pair(Mat(-b.BKd), b.Ctil));
      break;
    }
    case V::NoKdPerturbed: {
      check_perturbation_dims(sys, cfg);
      add(b.eye, ShapeFn::lambda());
      ShapeFn s_kd = ShapeFn::lambda();
      apply_kernel(s_kd, cfg.R1);
      apply_kernel(s_kd, cfg.R2);
      apply_kernel(s_kd, cfg.R3);
      add(-b.kd_blk, s_kd, std::make_pair(Mat(-b.BKd), b.Ctil));
      add(-b.A0_blk, ShapeFn::constant());
      ShapeFn s_kp = ShapeFn::constant();
      apply_kernel(s_kp, cfg.R1);
      apply_kernel(s_kp, cfg.R3);
      add(-b.kp_only, s_kp);
      ShapeFn s_ui = ShapeFn::constant();
      apply_kernel(s_ui, cfg.R1);
      add(-b.bui_blk, s_ui);
      ShapeFn s_vic = ShapeFn::constant();
      apply_kernel(s_vic, cfg.R3);
      add(-b.vic_blk, s_vic);
      add_delays();
      break;
    }
    case V::InputDelay: {
      check_perturbation_dims(sys, cfg);
      const double tau_u = *cfg.tau_u;
      add(b.eye, ShapeFn::lambda());
      add(-b.A0_blk, ShapeFn::constant());
      add_delays();
      // Sign convention: the feedback product enters negated here, exactly as
      // in every other variant (dropping the minus would flip the loop sign).
      ShapeFn s_kp = ShapeFn::exp_delay(tau_u);
      apply_kernel(s_kp, cfg.R1);
      apply_kernel(s_kp, cfg.R3);
      add(-b.kp_only, s_kp);
      ShapeFn s_ui = ShapeFn::exp_delay(tau_u);
      apply_kernel(s_ui, cfg.R1);
      add(-b.bui_blk, s_ui);
      ShapeFn s_vic = ShapeFn::constant();
      apply_kernel(s_vic, cfg.R3);
      add(-b.vic_blk, s_vic);
      ShapeFn s_kd = ShapeFn::lambda_exp(tau_u);
      if (cfg.T && *cfg.T != 0.0) s_kd.lp_T.push_back(*cfg.T);
      apply_kernel(s_kd, cfg.R1);
      apply_kernel(s_kd, cfg.R2);
      apply_kernel(s_kd, cfg.R3);
      add(-b.kd_blk, s_kd, std::make_pair(Mat(-b.BKd), b.Ctil));
      break;
    }
  }
  return CharacteristicPencil(b.d, std::move(terms));
}

// ---------------------------------------------------------------------------
// JSON I/O (canonical writer: fixed key order, %.17g doubles)
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void append_matrix(std::string& out, const Mat& M) {
  out += '[';
  for (int i = 0; i < M.rows(); ++i) {
    if (i) out += ',';
    out += '[';
    for (int j = 0; j < M.cols(); ++j) {
      if (j) out += ',';
      out += fmt_double(M(i, j));
    }
    out += ']';
  }
  out += ']';
}

Mat parse_matrix(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw LoadError(name + " must be an array of row arrays");
  const size_t rows = j.size(), cols = j[0].size();
  Mat M(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw LoadError(name + " has ragged rows");
    for (size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw LoadError(name + " has a non-numeric entry");
      M(i, k) = j[i][k].get<double>();
    }
  }
  return M;
}

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw LoadError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

std::string system_to_json(const DelaySystem& sys) {
  std::string out;
  out += "{\"n\":" + std::to_string(sys.n);
  out += ",\"m\":" + std::to_string(sys.m);
  out += ",\"p\":" + std::to_string(sys.p);
  out += ",\"A\":[";
  for (size_t k = 0; k < sys.A.size(); ++k) {
    if (k) out += ',';
    append_matrix(out, sys.A[k]);
  }
  out += "],\"delays\":[";
  for (size_t k = 0; k < sys.delays.size(); ++k) {
    if (k) out += ',';
    out += fmt_double(sys.delays[k]);
  }
  out += "],\"B\":";
  append_matrix(out, sys.B);
  out += ",\"C\":";
  append_matrix(out, sys.C);
  out += ",\"input_delay\":";
  out += sys.input_delay ? fmt_double(*sys.input_delay) : "null";
  out += "}\n";
  return out;
}

std::string gains_to_json(const Mat& Kp, const Mat& Kd, const Mat& Ki,
                          std::optional<double> T) {
  std::string out;
  out += "{\"Kp\":";
  append_matrix(out, Kp);
  out += ",\"Kd\":";
  append_matrix(out, Kd);
  out += ",\"Ki\":";
  append_matrix(out, Ki);
  out += ",\"T\":";
  out += T ? fmt_double(*T) : "null";
  out += "}\n";
  return out;
}

DelaySystem load_system(const std::string& path) {
  json j = parse_file(path);
  for (const char* key : {"n", "m", "p", "A", "delays", "B", "C"})
    if (!j.contains(key)) throw LoadError(std::string("missing key \"") + key + "\"");
  DelaySystem sys;
  sys.n = j["n"].get<int>();
  sys.m = j["m"].get<int>();
  sys.p = j["p"].get<int>();
  if (!j["A"].is_array()) throw LoadError("A must be an array of matrices");
  for (size_t k = 0; k < j["A"].size(); ++k)
    sys.A.push_back(parse_matrix(j["A"][k], "A[" + std::to_string(k) + "]"));
  for (const auto& d : j["delays"]) {
    if (!d.is_number()) throw LoadError("delays must be numeric");
    sys.delays.push_back(d.get<double>());
  }
  sys.B = parse_matrix(j["B"], "B");
  sys.C = parse_matrix(j["C"], "C");
  if (j.contains("input_delay") && !j["input_delay"].is_null())
    sys.input_delay = j["input_delay"].get<double>();
  sys.validate();
  return sys;
}

PidGains load_gains(const std::string& path, double rank_tol) {
  json j = parse_file(path);
  for (const char* key : {"Kp", "Kd", "Ki"})
    if (!j.contains(key)) throw LoadError(std::string("missing key \"") + key + "\"");
  Mat Kp = parse_matrix(j["Kp"], "Kp");
  Mat Kd = parse_matrix(j["Kd"], "Kd");
  Mat Ki = parse_matrix(j["Ki"], "Ki");
  std::optional<double> T;
  if (j.contains("T") && !j["T"].is_null()) T = j["T"].get<double>();
  try {
    return PidGains::from(std::move(Kp), std::move(Kd), std::move(Ki), T, rank_tol);
  } catch (const std::invalid_argument& e) {
    throw LoadError(std::string("invalid gains file: ") + e.what());
  }
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
    out << contents;
  }
  fs::rename(tmp, target);
}

}  // namespace strongstab
