#include "strongstab/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "strongstab/benchmarks.hpp"

namespace strongstab {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kHurwitzMargin = 1e-9;  // "alpha < 1" tested as alpha <= 1 - margin
}  // namespace

bool in_clos_S(Complex lambda) {
  const double im = lambda.imag();
  if (std::abs(im) >= kPi) return false;  // bound falls to -infinity at |Im| = pi
  double bound;
  if (std::abs(im) < 1e-8)
    bound = 1.0 - im * im / 3.0;
  else
    bound = im * std::cos(im) / std::sin(im);
  return lambda.real() <= bound;
}

FragilityReport fragility_report(const DelaySystem& sys, const PidGains& gains,
                                 const SolverOpts& opts) {
  FragilityReport rep;
  rep.eig_BKdC = bkdc_eigenvalues(sys, gains.Kd);
  for (Complex e : rep.eig_BKdC) {
    rep.rho_BKdC = std::max(rep.rho_BKdC, std::abs(e));
    rep.alpha_BKdC = std::max(rep.alpha_BKdC, e.real());
    if (!in_clos_S(e)) rep.fd_fragile = true;
    if (e.real() > 1.0 + kHurwitzMargin) rep.lowpass_destabilizing = true;
  }
  rep.delay_fragile = rep.rho_BKdC > 1.0 + kHurwitzMargin;
  rep.boundary_inconclusive = std::abs(rep.rho_BKdC - 1.0) <= kHurwitzMargin ||
                              std::abs(rep.alpha_BKdC - 1.0) <= kHurwitzMargin;
  rep.cb_zero = (sys.C * sys.B).norm() <= 1e-14 * std::max(1.0, sys.C.norm() * sys.B.norm());

  rep.nominal_abscissa = spectral_abscissa(assemble_pencil(sys, gains, LoopConfig::nominal()), opts);
  rep.nominal_stable = rep.nominal_abscissa < 0.0;
  rep.strong_with_filter = rep.nominal_stable && rep.alpha_BKdC <= 1.0 - kHurwitzMargin;
  return rep;
}

bool odd_number_limitation(const DelaySystem& sys, const Mat& Kp, const Mat& Ki,
                           const SolverOpts& opts) {
  (void)opts;
  PidGains g = PidGains::from(Kp, Mat::Zero(Kp.rows(), Kp.cols()), Ki);
  CharacteristicPencil pencil = assemble_pencil(sys, g, LoopConfig::nominal());
  double R = rhp_modulus_bound(pencil, 0.0);
  int count;
  try {
    count = count_rhp_roots(pencil, Rect{0.0, R, -R, R});
  } catch (const std::runtime_error&) {
    throw std::runtime_error(
        "odd_number_limitation: root on the imaginary axis for the Kd = 0 loop; boundary "
        "case, limitation test inconclusive");
  }
  return count % 2 == 1;
}

RouthResult routh_hurwitz(const std::vector<double>& coeffs) {
  if (coeffs.size() != 4 && coeffs.size() != 5)
    throw std::invalid_argument("routh_hurwitz: expected degree 3 or 4 (4 or 5 coefficients)");
  if (coeffs.front() == 0.0)
    throw std::invalid_argument("routh_hurwitz: zero leading coefficient");
  std::vector<double> a = coeffs;
  if (a.front() < 0.0)
    for (double& x : a) x = -x;

  RouthResult res;
  if (a.size() == 4) {
    // a3 s^3 + a2 s^2 + a1 s + a0, a3 > 0
    res.conditions = {a[1] > 0.0, a[2] > 0.0, a[3] > 0.0, a[1] * a[2] - a[0] * a[3] > 0.0};
  } else {
    // b4 s^4 + b3 s^3 + b2 s^2 + b1 s + b0, b4 > 0; mirrors the 6-condition layout
    const double b4 = a[0], b3 = a[1], b2 = a[2], b1 = a[3], b0 = a[4];
    const double d1 = b3 * b2 - b4 * b1;
    res.conditions = {b3 > 0.0, b2 > 0.0,          b1 > 0.0,
                      b0 > 0.0, d1 > 0.0,          d1 * b1 - b3 * b3 * b0 > 0.0};
  }
  res.stable = true;
  for (bool c : res.conditions) res.stable = res.stable && c;
  return res;
}

RegionLabel third_order_region(double kp, double kd) {
  const double line = 1.0 / 3.0 + 2.0 / 3.0 * kp;
  if (kp < -1.0 && kd < line)
    return {kd > -1.0 ? RegionKind::RobustNoFilter : RegionKind::StrongStable, 0};
  if (kd > 1.0 && kp > 1.0 && kd < line) return {RegionKind::StableFragile, 0};

  // off the stable sets: count closed-RHP roots of the characteristic cubic
  DelaySystem sys = third_order_system();
  CharacteristicPencil pencil = assemble_pencil(sys, pd_gains(kp, kd), LoopConfig::nominal());
  Mat mass = pencil.mass();
  if (std::abs(mass.topLeftCorner(1, 1)(0, 0)) < 1e-12)  // kd = 1: degenerate leading term
    return {RegionKind::Unstable, -1};
  int count = -1;
  try {
    double R = rhp_modulus_bound(pencil, 0.0);
    count = count_rhp_roots(pencil, Rect{0.0, R, -R, R});
  } catch (const std::exception&) {
    try {  // root on the axis (parameter boundary): count just right of it
      double R = rhp_modulus_bound(pencil, 1e-7);
      count = count_rhp_roots(pencil, Rect{1e-7, R, -R, R});
    } catch (const std::exception&) {
      count = -1;
    }
  }
  return {RegionKind::Unstable, count};
}

std::optional<double> crossing_frequency(double kp) {
  if (kp == 1.0) return std::nullopt;
  const double val = (-kp - 1.0) / (1.0 - kp);
  if (val < 0.0) return std::nullopt;
  return std::sqrt(val);
}

std::string FragilityReport::to_json() const {
  char buf[64];
  auto fmt = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  auto b = [](bool v) { return v ? "true" : "false"; };
  std::string out = "{";
  out += "\"rho_BKdC\":" + fmt(rho_BKdC);
  out += ",\"alpha_BKdC\":" + fmt(alpha_BKdC);
  out += ",\"eig_BKdC\":[";
  for (size_t i = 0; i < eig_BKdC.size(); ++i) {
    if (i) out += ',';
    out += '[' + fmt(eig_BKdC[i].real()) + ',' + fmt(eig_BKdC[i].imag()) + ']';
  }
  out += "],\"nominal_abscissa\":" + fmt(nominal_abscissa);
  out += std::string(",\"nominal_stable\":") + b(nominal_stable);
  out += std::string(",\"delay_fragile\":") + b(delay_fragile);
  out += std::string(",\"fd_fragile\":") + b(fd_fragile);
  out += std::string(",\"lowpass_destabilizing\":") + b(lowpass_destabilizing);
  out += std::string(",\"cb_zero\":") + b(cb_zero);
  out += std::string(",\"strong_with_filter\":") + b(strong_with_filter);
  out += std::string(",\"boundary_inconclusive\":") + b(boundary_inconclusive);
  out += "}\n";
  return out;
}

}  // namespace strongstab
