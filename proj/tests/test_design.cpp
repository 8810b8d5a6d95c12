#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "strongstab/design.hpp"
#include "strongstab/benchmarks.hpp"
#include "test_helpers.hpp"

using namespace strongstab;

namespace {

// central finite differences of the nominal abscissa over all gain entries
void fd_gradient(const DelaySystem& sys, const PidGains& gains, double h, Mat& gkp, Mat& gkd,
                 Mat& gki) {
  auto f = [&](const Mat& Kp, const Mat& Kd, const Mat& Ki) {
    PidGains g = PidGains::from(Kp, Kd, Ki);
    return spectral_abscissa(assemble_pencil(sys, g, LoopConfig::nominal()));
  };
  gkp = Mat::Zero(sys.m, sys.p);
  gkd = gkp;
  gki = gkp;
  for (int i = 0; i < sys.m; ++i)
    for (int j = 0; j < sys.p; ++j) {
      Mat e = Mat::Zero(sys.m, sys.p);
      e(i, j) = h;
      gkp(i, j) = (f(gains.Kp + e, gains.Kd, gains.Ki) -
                   f(gains.Kp - e, gains.Kd, gains.Ki)) / (2.0 * h);
      gkd(i, j) = (f(gains.Kp, gains.Kd + e, gains.Ki) -
                   f(gains.Kp, gains.Kd - e, gains.Ki)) / (2.0 * h);
      gki(i, j) = (f(gains.Kp, gains.Kd, gains.Ki + e) -
                   f(gains.Kp, gains.Kd, gains.Ki - e)) / (2.0 * h);
    }
}

}  // namespace

TEST_CASE("objective_with_penalty") {
  DelaySystem sys = third_order_system();

  PidGains strong = pd_gains(-2.0, -2.0);
  double f = spectral_abscissa(assemble_pencil(sys, strong, LoopConfig::nominal()));
  CHECK(f < 0.0);
  CHECK(objective_with_penalty(sys, strong, 100.0) == doctest::Approx(f).epsilon(1e-12));

  PidGains hot = pd_gains(0.5, 2.0);  // alpha(B Kd C) = 2
  double fh = spectral_abscissa(assemble_pencil(sys, hot, LoopConfig::nominal()));
  CHECK(objective_with_penalty(sys, hot, 100.0) ==
        doctest::Approx(fh + 100.0).epsilon(1e-10));

  PidGains nokd = pd_gains(0.5, 0.0);
  double f0 = spectral_abscissa(assemble_pencil(sys, nokd, LoopConfig::nominal()));
  CHECK(objective_with_penalty(sys, nokd, 1e6) == doctest::Approx(f0).epsilon(1e-12));

  PidGains singular = pd_gains(0.5, 1.0);  // I - B Kd C singular at kd = 1
  CHECK(std::isinf(objective_with_penalty(sys, singular, 100.0)));
}

TEST_CASE("gradient matches central finite differences") {
  std::mt19937_64 rng(41);
  int done = 0;
  while (done < 20) {
    int n = 2 + static_cast<int>(rng() % 2);
    DelaySystem sys = testing::random_system(rng, n, 1, 2, static_cast<int>(rng() % 2), 0.4);
    PidGains gains = testing::random_gains(rng, 1, 2, 0.4);
    Gradient g;
    try {
      g = grad_objective(sys, gains);
    } catch (const std::exception&) {
      continue;
    }
    if (g.multiple_rightmost) continue;  // nonsmooth point, subgradient only
    // keep clearly smooth instances for the finite-difference oracle
    Mat fkp, fkd, fki;
    try {
      fd_gradient(sys, gains, 1e-6, fkp, fkd, fki);
    } catch (const std::exception&) {
      continue;
    }
    double scale = std::max({1.0, fkp.norm(), fkd.norm(), fki.norm()});
    if (scale > 1e3) continue;  // near-defective root, derivative blows up
    CHECK((g.kp - fkp).norm() <= 1e-5 * scale);
    CHECK((g.kd - fkd).norm() <= 1e-5 * scale);
    CHECK((g.ki - fki).norm() <= 1e-5 * scale);
    ++done;
  }
}

TEST_CASE("gradient of the second-order PD abscissa in closed form") {
  // complex pair: abscissa = -kp / (2 (1 + kd)); at (-1, -2) the partials
  // are d/dkp = 1/2 and d/dkd = -1/2
  DelaySystem sys = second_order_system(1.0);
  Gradient g = grad_objective(sys, pd_gains(-1.0, -2.0));
  CHECK(g.kp(0, 0) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(g.kd(0, 0) == doctest::Approx(-0.5).epsilon(1e-8));
  CHECK(g.ki(0, 0) == 0.0);  // Ki = 0 stays out of the loop
}

TEST_CASE("structure mask removes gradient components") {
  DelaySystem sys = benchmark_6x3x2_system();
  PidGains gains = benchmark_6x3x2_gains();
  DesignOpts opts;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(3, 2, true);
  mask(1, 0) = false;
  opts.mask_kp = mask;
  Gradient g = grad_objective(sys, gains, opts);
  CHECK(g.kp(1, 0) == 0.0);
  CHECK(g.kp(0, 0) != 0.0);
}

TEST_CASE("rescale_kd is idempotent and hits 0.9") {
  DelaySystem sys = third_order_system();
  PidGains big = pd_gains(0.3, 1.8);  // alpha = 1.8
  PidGains once = rescale_kd(sys, big);
  CHECK(once.Kd(0, 0) == doctest::Approx(0.9).epsilon(1e-12));
  PidGains twice = rescale_kd(sys, once);
  CHECK(twice.Kd == once.Kd);  // bitwise

  PidGains small = pd_gains(0.3, -0.5);
  CHECK(rescale_kd(sys, small).Kd == small.Kd);
}

TEST_CASE("select_T on the third-order strong-stability gains") {
  DelaySystem sys = third_order_system();
  double T = select_T(sys, pd_gains(-2.0, -2.0));
  CHECK(T <= 1e-2);
  CHECK(T >= 1e-12);
  double a0 = spectral_abscissa(assemble_pencil(sys, pd_gains(-2.0, -2.0), LoopConfig::nominal()));
  double aT =
      spectral_abscissa(assemble_pencil(sys, pd_gains(-2.0, -2.0), LoopConfig::low_pass(T)));
  CHECK(aT < 0.0);
  CHECK(aT <= a0 + 0.05 * std::abs(a0));

  CHECK_THROWS_AS(select_T(sys, pd_gains(2.0, 1.5)), std::invalid_argument);  // alpha > 1
}

TEST_CASE("design_pid on the third-order plant from the fragile corner") {
  DelaySystem sys = third_order_system();
  DesignOpts opts;
  opts.starts = 1;
  opts.seed = 1;
  opts.initial = pd_gains(1.5, 1.2);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> none =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(1, 1, false);
  opts.mask_ki = none;  // PD structure
  DesignResult res = design_pid(sys, opts);
  CHECK(res.feasible);
  double kp = res.gains.Kp(0, 0), kd = res.gains.Kd(0, 0);
  CHECK(kp < -1.0);
  CHECK(kd < 1.0 / 3.0 + 2.0 / 3.0 * kp);
  CHECK(res.T_selected.has_value());
  // monotone trace of accepted steps
  for (const StartRecord& rec : res.starts)
    for (size_t i = 0; i + 1 < rec.trace.size(); ++i)
      CHECK(rec.trace[i + 1] <= rec.trace[i] + 1e-12);
}

TEST_CASE("unconstrained design lands in the fragile basin") {
  // without the rescale and penalty, the descent from (1.5, 1.2) settles at a
  // nominally stable point whose filter loop is destabilized (alpha > 1)
  DelaySystem sys = third_order_system();
  DesignOpts opts;
  opts.starts = 1;
  opts.seed = 1;
  opts.initial = pd_gains(1.5, 1.2);
  opts.constrained = false;
  opts.mask_ki =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(1, 1, false);
  DesignResult res = design_pid(sys, opts);
  CHECK(res.objective < 0.0);
  CHECK(res.alpha_constraint > 1.0);
  CHECK(res.gains.Kd(0, 0) > 1.0);
  CHECK_FALSE(res.feasible);
}

TEST_CASE("quadcopter cut-off rule holds at T = 1e-6") {
  DelaySystem sys = quadcopter_system();
  PidGains gains = quadcopter_gains_pid();
  double a0 = spectral_abscissa(assemble_pencil(sys, gains, LoopConfig::nominal()));
  double aT = spectral_abscissa(assemble_pencil(sys, gains, LoopConfig::low_pass(1e-6)));
  CHECK(a0 < 0.0);
  CHECK(aT < 0.0);
  CHECK(aT <= a0 + 0.05 * std::abs(a0));  // T = 1e-6 passes the selection rule
}

TEST_CASE("warm-started input-delay redesign of the quadcopter") {
  DelaySystem sys = quadcopter_system();
  sys.input_delay = 0.1;
  DesignOpts opts;
  opts.starts = 1;
  opts.seed = 0;
  opts.max_iters = 25;
  opts.opt_N = 12;
  opts.initial = quadcopter_gains_pid();  // unstable at tau_u = 0.1 as-is
  DesignResult res = design_input_delay(sys, opts);
  CHECK(res.feasible);
  CHECK(res.objective < 0.0);
  CHECK(res.alpha_constraint < 1.0);  // the barrier kept rho inside
}

TEST_CASE("second-order plants admit no strongly stabilizable PD design") {
  // every stabilizing PD needs kd < -1, which forces rho(B Kd C) = |kd| > 1
  DelaySystem sys = second_order_system(1.0);
  DesignOpts opts;
  opts.starts = 3;
  opts.seed = 7;
  opts.max_iters = 60;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> none =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(1, 1, false);
  opts.mask_ki = none;
  DesignResult res = design_pid(sys, opts);
  CHECK_FALSE(res.feasible);
  CHECK(res.starts.size() == 3);
}

TEST_CASE("design is deterministic in the seed") {
  DelaySystem sys = third_order_system();
  DesignOpts opts;
  opts.starts = 2;
  opts.seed = 42;
  opts.max_iters = 40;
  DesignResult a = design_pid(sys, opts);
  DesignResult b = design_pid(sys, opts);
  CHECK(a.gains.Kp == b.gains.Kp);
  CHECK(a.gains.Kd == b.gains.Kd);
  CHECK(a.gains.Ki == b.gains.Ki);
  CHECK(a.best_start == b.best_start);
}

TEST_CASE("design_input_delay stabilizes a scalar unstable plant") {
  DelaySystem sys;
  sys.n = 1;
  sys.m = 1;
  sys.p = 1;
  sys.A = {Mat{{1.0}}};
  sys.B = Mat{{1.0}};
  sys.C = Mat{{1.0}};
  sys.input_delay = 0.1;
  DesignOpts opts;
  opts.starts = 4;
  opts.seed = 3;
  opts.max_iters = 120;
  DesignResult res = design_input_delay(sys, opts);
  CHECK(res.feasible);
  CHECK(res.objective < 0.0);
  CHECK(res.alpha_constraint < 1.0);  // rho for the input-delay variant

  // tau_u = 0 falls back to the plain design
  sys.input_delay = 0.0;
  DesignResult plain = design_input_delay(sys, opts);
  CHECK(plain.starts.size() == 4);
}
