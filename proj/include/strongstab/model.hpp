#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "strongstab/types.hpp"

namespace strongstab {

/// Raised when a system/gains file does not satisfy the schema or the
/// model invariants (dimension mismatch, delay ordering, rank deficiency).
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// LTI plant with multiple discrete state delays:
///   x'(t) = A[0] x(t) + sum_k A[k] x(t - delays[k-1]) + B u(t[-input_delay])
///   y(t)  = C x(t)
struct DelaySystem {
  int n = 0;  // states
  int m = 0;  // inputs
  int p = 0;  // outputs
  std::vector<Mat> A;          // K+1 matrices, A[0] is the undelayed one
  std::vector<double> delays;  // strictly increasing, positive
  Mat B;
  Mat C;
  std::optional<double> input_delay;

  int K() const { return static_cast<int>(delays.size()); }
  void validate() const;  // throws LoadError on any invariant violation
};

/// PID gain matrices with the rank-revealing factorization Ki = Ui * Vi
/// that sizes the integrator augmentation (q = rank Ki).
struct PidGains {
  Mat Kp, Kd, Ki;
  int rank_q = 0;
  Mat Ui;  // m x q, full column rank
  Mat Vi;  // q x p, full row rank
  std::optional<double> filter_T;

  static PidGains from(Mat Kp, Mat Kd, Mat Ki,
                       std::optional<double> filter_T = std::nullopt,
                       double rank_tol = 1e-10);
};

/// rank-revealing decomposition of Ki via SVD; q counts singular values
/// above tol * sigma_max. Ki = 0 gives q = 0 and empty factors.
struct RankFactorization {
  Mat Ui, Vi;
  int q;
};
RankFactorization rank_factorize(const Mat& Ki, double tol = 1e-10);

enum class PerturbationKind { Identity, DelayExp, FiniteDiffKernel, LowPassKernel };

/// Scalar-kernel perturbation R(lambda; r) = kernel(lambda) * I_dim.
/// All catalog members evaluate to the identity at r = 0.
struct PerturbationFn {
  PerturbationKind kind = PerturbationKind::Identity;
  double r = 0.0;
  int dim = 1;

  Complex kernel(Complex lambda) const;        // scalar factor
  Complex kernel_deriv(Complex lambda) const;  // d/dlambda of the factor
  CMat eval(Complex lambda) const { return kernel(lambda) * CMat::Identity(dim, dim); }
  bool full_rank_for_all_lambda() const;  // false only for FiniteDiffKernel with r > 0
};

/// Closed-loop configuration selecting which characteristic function
/// assemble_pencil builds.
struct LoopConfig {
  enum class Variant {
    Nominal,           // ideal PID loop
    FeedbackDelay,     // the whole feedback signal delayed by r
    FiniteDifference,  // derivative replaced by (y(t) - y(t-r)) / r
    LowPass,           // first-order filter (constant T) on the derivative
    GeneralPerturbed,  // filtered loop with kernels R1/R2/R3 on the channels
    NoKdPerturbed,     // unfiltered loop with kernels R1/R2/R3
    InputDelay,        // fixed input delay tau_u; T absent -> unfiltered
  };

  Variant variant = Variant::Nominal;
  double r = 0.0;                // FeedbackDelay / FiniteDifference size
  std::optional<double> T;       // filter constant where present
  std::optional<double> tau_u;   // input delay
  PerturbationFn R1, R2, R3;     // identity unless set

  static LoopConfig nominal();
  static LoopConfig feedback_delay(double r);
  static LoopConfig finite_difference(double r);
  static LoopConfig low_pass(double T);
  static LoopConfig general_perturbed(double T, PerturbationFn R1, PerturbationFn R2,
                                      PerturbationFn R3);
  static LoopConfig no_kd_perturbed(PerturbationFn R1, PerturbationFn R2, PerturbationFn R3);
  static LoopConfig with_input_delay(double tau_u, std::optional<double> T,
                                     PerturbationFn R1 = {}, PerturbationFn R2 = {},
                                     PerturbationFn R3 = {});
};

/// Scalar shape function multiplying one matrix coefficient of the pencil:
///   lambda^a * exp(-lambda*delay) * prod fd(r_i) * prod 1/(lambda*T_i + 1)
/// with fd(r) = (1 - exp(-lambda r)) / (lambda r), the finite-difference
/// kernel, evaluated by series near lambda*r = 0. The catalog is 1/lambda
/// free: integral action lives in the U_i/V_i augmentation blocks instead.
struct ShapeFn {
  int lambda_power = 0;  // 0 or 1
  double delay = 0.0;
  std::vector<double> fd_r;  // at most one, and only with lambda_power == 1
  std::vector<double> lp_T;

  Complex eval(Complex lambda) const;   // throws std::domain_error at a filter pole
  Complex deriv(Complex lambda) const;
  double magnitude(Complex lambda) const;  // |eval|, 0 at kernel zeros

  static ShapeFn constant() { return {}; }
  static ShapeFn lambda() { return {1, 0.0, {}, {}}; }
  static ShapeFn exp_delay(double tau) { return {0, tau, {}, {}}; }
  static ShapeFn lambda_exp(double tau) { return {1, tau, {}, {}}; }
};

/// One additive term M * shape(lambda) of a characteristic pencil. Terms
/// with low-pass factors carry the factorization M = L * R used by the
/// eigensolver to augment the state with one filter variable per factor.
struct PencilTerm {
  Mat M;
  ShapeFn shape;
  std::optional<std::pair<Mat, Mat>> lowrank;  // M == first * second
};

/// Structured matrix-valued function F(lambda) = sum_t M_t * s_t(lambda)
/// of size (n+q); its roots are the closed-loop characteristic roots.
class CharacteristicPencil {
 public:
  CharacteristicPencil(int size, std::vector<PencilTerm> terms);

  int size() const { return size_; }
  const std::vector<PencilTerm>& terms() const { return terms_; }

  CMat eval(Complex lambda) const;
  CMat deriv(Complex lambda) const;
  /// Residual scale sum_t ||M_t||_F |s_t(lambda)|; stays O(||F||) at roots.
  double term_scale(Complex lambda) const;

  /// Coefficient of the plain-lambda shape (I - B Kd C for the nominal loop).
  Mat mass() const;
  /// True when a lambda-power term carries a genuine delay (essential spectrum).
  bool is_neutral() const;
  double max_delay() const;
  std::optional<double> min_positive_delay() const;

  /// Linear-in-lambda delayed form sum_t Mhat_t lambda^{a_t} e^{-lambda tau_t}
  /// on an augmented state (finite-difference kernels expanded, one extra
  /// variable block per low-pass factor).
  struct LinearTerm {
    Mat M;
    int lambda_power;  // 0 or 1
    double delay;
  };
  struct Linearized {
    int dim;
    std::vector<LinearTerm> terms;
  };
  Linearized linearize() const;

 private:
  int size_;
  std::vector<PencilTerm> terms_;
};

/// Builds the characteristic pencil of the configured loop. The integral
/// action always enters through the (n+q) augmentation, never as 1/lambda.
CharacteristicPencil assemble_pencil(const DelaySystem& sys, const PidGains& gains,
                                     const LoopConfig& cfg);

inline CMat eval_pencil(const CharacteristicPencil& pencil, Complex lambda) {
  return pencil.eval(lambda);
}

// JSON file I/O. Writers emit canonical text: fixed key order and
// 17-significant-digit doubles, so identical data produces identical bytes.
DelaySystem load_system(const std::string& path);
PidGains load_gains(const std::string& path, double rank_tol = 1e-10);
std::string system_to_json(const DelaySystem& sys);
std::string gains_to_json(const Mat& Kp, const Mat& Kd, const Mat& Ki,
                          std::optional<double> T);
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace strongstab
