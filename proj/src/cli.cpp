#include "strongstab/cli.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "strongstab/analysis.hpp"
#include "strongstab/design.hpp"
#include "strongstab/benchmarks.hpp"
#include "strongstab/perturbation.hpp"
#include "strongstab/spectra.hpp"

namespace strongstab {

namespace {

// grid syntax a:b:n, inclusive endpoints; endpoints accept simple fractions p/q
double parse_endpoint(const std::string& s) {
  size_t slash = s.find('/', 1);  // a leading '-' is not a separator
  if (slash != std::string::npos)
    return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
  return std::stod(s);
}

std::vector<double> parse_grid(const std::string& arg) {
  size_t c1 = arg.find(':');
  size_t c2 = arg.rfind(':');
  if (c1 == std::string::npos || c2 == c1)
    throw CLI::ValidationError("grid", "expected a:b:n, got '" + arg + "'");
  double a = parse_endpoint(arg.substr(0, c1));
  double b = parse_endpoint(arg.substr(c1 + 1, c2 - c1 - 1));
  int n = std::stoi(arg.substr(c2 + 1));
  if (n < 1) throw CLI::ValidationError("grid", "need at least one point");
  std::vector<double> g;
  for (int i = 0; i < n; ++i)
    g.push_back(n == 1 ? a : a + (b - a) * i / (n - 1.0));
  return g;
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

LoopConfig make_variant(const std::string& name, const DelaySystem& sys, double r,
                        std::optional<double> T) {
  if (name == "nominal") return LoopConfig::nominal();
  if (name == "fbdelay") return LoopConfig::feedback_delay(r);
  if (name == "fd") return LoopConfig::finite_difference(r);
  if (name == "lowpass") return LoopConfig::low_pass(T.value_or(1e-6));
  if (name == "input-delay") {
    if (!sys.input_delay)
      throw LoadError("variant input-delay requires an input_delay in the system file");
    return LoopConfig::with_input_delay(*sys.input_delay, T);
  }
  throw CLI::ValidationError("variant", "unknown variant '" + name + "'");
}

int cmd_analyze(const std::string& system_path, const std::string& gains_path,
                const std::string& variant, double r, std::optional<double> T, int N,
                const std::string& out) {
  DelaySystem sys = load_system(system_path);
  PidGains gains = gains_path.empty()
                       ? PidGains::from(Mat::Zero(sys.m, sys.p), Mat::Zero(sys.m, sys.p),
                                        Mat::Zero(sys.m, sys.p))
                       : load_gains(gains_path);
  if (!T && gains.filter_T) T = gains.filter_T;
  SolverOpts opts;
  opts.N = N;
  RootSet rs = rightmost_roots(assemble_pencil(sys, gains, make_variant(variant, sys, r, T)), opts);
  bool have_root = false;
  double abscissa = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < rs.roots.size(); ++i)
    if (rs.converged[i]) {
      abscissa = rs.roots[i].real();
      have_root = true;
      break;
    }
  if (!have_root) {
    std::cerr << "error: no converged characteristic root in the search window; "
                 "increase --N or widen the window\n";
    return 2;
  }
  std::cout << "variant: " << variant << "\n";
  std::cout << "roots found: " << rs.roots.size() << " (N = " << rs.discretization_N << ")\n";
  std::cout << "spectral abscissa: " << fmt17(abscissa) << "\n";
  std::cout << "verdict: " << (abscissa < 0.0 ? "stable" : "unstable") << "\n";
  if (!out.empty()) {
    bool csv = out.size() > 4 && out.substr(out.size() - 4) == ".csv";
    write_file_atomic(out, csv ? rs.to_csv() : rs.to_json());
  }
  return abscissa < 0.0 ? 0 : 1;
}

int cmd_check(const std::string& system_path, const std::string& gains_path, int N,
              const std::string& out) {
  DelaySystem sys = load_system(system_path);
  PidGains gains = load_gains(gains_path);
  SolverOpts opts;
  opts.N = N;
  FragilityReport rep = fragility_report(sys, gains, opts);

  auto yn = [](bool v) { return v ? "yes" : "no"; };
  std::printf("%-28s %s\n", "nominal stable:", yn(rep.nominal_stable));
  std::printf("%-28s %.6g\n", "nominal abscissa:", rep.nominal_abscissa);
  std::printf("%-28s %.6g\n", "rho(B Kd C):", rep.rho_BKdC);
  std::printf("%-28s %.6g\n", "alpha(B Kd C):", rep.alpha_BKdC);
  std::printf("%-28s %s\n", "delay fragile:", yn(rep.delay_fragile));
  std::printf("%-28s %s\n", "fin-diff fragile:", yn(rep.fd_fragile));
  std::printf("%-28s %s\n", "low-pass destabilizing:", yn(rep.lowpass_destabilizing));
  std::printf("%-28s %s\n", "CB = 0 (rel. degree > 1):", yn(rep.cb_zero));
  std::printf("%-28s %s\n", "strong with filter:", yn(rep.strong_with_filter));
  if (rep.boundary_inconclusive)
    std::printf("%-28s %s\n", "boundary case:", "inconclusive (rho or alpha within 1e-9 of 1)");
  std::string verdict;
  if (rep.strong_with_filter)
    verdict = "StrongStable";
  else if (rep.nominal_stable && rep.cb_zero)
    verdict = "StrongStableNoFilter";
  else if (rep.nominal_stable)
    verdict = "StableFragile";
  else
    verdict = "Unstable";
  std::printf("%-28s %s\n", "verdict:", verdict.c_str());
  std::cout << rep.to_json();
  if (!out.empty()) write_file_atomic(out, rep.to_json());
  return rep.nominal_stable ? 0 : 1;
}

int cmd_design(const std::string& system_path, int starts, std::uint64_t seed, double t,
               int N, const std::string& variant, const std::string& out) {
  DelaySystem sys = load_system(system_path);
  DesignOpts opts;
  opts.starts = starts;
  opts.seed = seed;
  opts.t_penalty = t;
  opts.verify.N = N;
  DesignResult res = (variant == "input-delay") ? design_input_delay(sys, opts)
                                                : design_pid(sys, opts);
  std::cout << "feasible: " << (res.feasible ? "yes" : "no") << "\n";
  std::cout << "objective (nominal abscissa): " << fmt17(res.objective) << "\n";
  std::cout << "constraint (alpha or rho):    " << fmt17(res.alpha_constraint) << "\n";
  if (res.T_selected) std::cout << "selected T: " << fmt17(*res.T_selected) << "\n";
  if (!out.empty()) write_file_atomic(out, res.to_json());
  return res.feasible ? 0 : 1;
}

int cmd_sweep(const std::string& system_path, const std::string& gains_path,
              const std::string& kind, const std::string& grid_arg, int N,
              const std::string& out) {
  DelaySystem sys = load_system(system_path);
  PidGains gains = load_gains(gains_path);
  SweepVariant variant;
  if (kind == "fbdelay")
    variant = SweepVariant::FeedbackDelay;
  else if (kind == "fd")
    variant = SweepVariant::FiniteDifference;
  else if (kind == "lowpass")
    variant = SweepVariant::LowPass;
  else
    throw CLI::ValidationError("perturbation", "expected fbdelay|fd|lowpass");
  std::vector<double> grid = grid_arg.empty() ? default_sweep_grid() : parse_grid(grid_arg);
  SolverOpts opts;
  opts.N = N;
  SweepResult res = sweep(sys, gains, variant, grid, opts);
  if (!out.empty()) write_file_atomic(out, res.to_csv());
  int stable_points = 0;
  for (bool s : res.stable) stable_points += s;
  std::cout << "sweep points: " << res.grid.size() << ", stable: " << stable_points << "\n";
  return (res.solved.front() && res.stable.front()) ? 0 : 1;
}

int cmd_region(const std::string& system_path, const std::string& kp_arg,
               const std::string& kd_arg, const std::string& out) {
  DelaySystem sys = load_system(system_path);
  if (sys.m != 1 || sys.p != 1)
    throw LoadError("region scanning is defined for SISO systems");
  std::vector<double> kps = parse_grid(kp_arg), kds = parse_grid(kd_arg);

  // closed-form labels are exact for the bundled third-order plant
  DelaySystem third = third_order_system();
  bool is_third = sys.K() == 0 && sys.n == 3 && sys.A[0] == third.A[0] &&
                  sys.B == third.B && sys.C == third.C;

  std::string csv = "kp,kd,label,count\r\n";
  for (double kp : kps)
    for (double kd : kds) {
      std::string label;
      int count = -1;
      if (is_third) {
        RegionLabel rl = third_order_region(kp, kd);
        count = rl.rhp_count;
        switch (rl.kind) {
          case RegionKind::StrongStable: label = "StrongStable"; break;
          case RegionKind::RobustNoFilter: label = "RobustNoFilter"; break;
          case RegionKind::StableFragile: label = "StableFragile"; break;
          case RegionKind::Unstable: label = "Unstable"; break;
        }
      } else {
        try {
          CharacteristicPencil pencil =
              assemble_pencil(sys, pd_gains(kp, kd), LoopConfig::nominal());
          double R = rhp_modulus_bound(pencil, 0.0);
          count = count_rhp_roots(pencil, Rect{0.0, R, -R, R});
          label = count == 0 ? "Stable" : "Unstable";
        } catch (const std::exception&) {
          label = "Degenerate";
        }
      }
      csv += fmt17(kp) + "," + fmt17(kd) + "," + label + "," + std::to_string(count) + "\r\n";
    }
  write_file_atomic(out, csv);
  std::cout << "wrote " << kps.size() * kds.size() << " grid points to " << out << "\n";
  return 0;
}

int cmd_examples(const std::string& name, const std::string& prefix) {
  auto emit = [&](const std::string& suffix, const std::string& text) {
    std::string path = prefix + suffix;
    write_file_atomic(path, text);
    std::cout << "wrote " << path << "\n";
  };
  if (name == "2nd") {
    emit(".system.json", system_to_json(second_order_system()));
  } else if (name == "3rd") {
    emit(".system.json", system_to_json(third_order_system()));
  } else if (name == "ex52") {
    emit(".system.json", system_to_json(benchmark_6x3x2_system()));
    PidGains g = benchmark_6x3x2_gains();
    emit(".gains.json", gains_to_json(g.Kp, g.Kd, g.Ki, 1e-7));
  } else if (name == "quadcopter") {
    emit(".system.json", system_to_json(quadcopter_system()));
    PidGains g = quadcopter_gains_pid();
    emit(".gains_pid.json", gains_to_json(g.Kp, g.Kd, g.Ki, 1e-6));
    PidGains gu = quadcopter_gains_input_delay();
    emit(".gains_input_delay.json", gains_to_json(gu.Kp, gu.Kd, gu.Ki, 1e-6));
  } else {
    throw CLI::ValidationError("name", "expected 2nd|3rd|ex52|quadcopter");
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"analysis and synthesis of strongly stabilizing PID controllers for "
               "time-delay systems"};
  app.require_subcommand(1);

  std::string system_path, gains_path, out, variant = "nominal", name, kp_arg, kd_arg,
              grid_arg, perturbation;
  double r = 0.0, t_penalty = 1e2;
  std::optional<double> T;
  int N = 40, starts = 10;
  std::uint64_t seed = 0;

  CLI::App* analyze = app.add_subcommand("analyze", "characteristic roots of a closed loop");
  analyze->add_option("--system", system_path)->required();
  analyze->add_option("--gains", gains_path);
  analyze->add_option("--variant", variant);
  analyze->add_option("--r", r);
  analyze->add_option("--T", T);
  analyze->add_option("--N", N);
  analyze->add_option("--out", out);

  CLI::App* check = app.add_subcommand("check", "fragility / strong-stability report");
  check->add_option("--system", system_path)->required();
  check->add_option("--gains", gains_path)->required();
  check->add_option("--N", N);
  check->add_option("--out", out);

  CLI::App* design = app.add_subcommand("design", "strongly stabilizing PID synthesis");
  design->add_option("--system", system_path)->required();
  design->add_option("--starts", starts);
  design->add_option("--seed", seed);
  design->add_option("--t", t_penalty);
  design->add_option("--N", N);
  design->add_option("--variant", variant);
  design->add_option("--out", out);

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "perturbation-size sweep");
  sweep_cmd->add_option("--system", system_path)->required();
  sweep_cmd->add_option("--gains", gains_path)->required();
  sweep_cmd->add_option("--perturbation", perturbation)->required();
  sweep_cmd->add_option("--grid", grid_arg);
  sweep_cmd->add_option("--N", N);
  sweep_cmd->add_option("--out", out);

  CLI::App* region = app.add_subcommand("region", "(kp, kd) stability region map");
  region->add_option("--system", system_path)->required();
  region->add_option("--kp", kp_arg)->required();
  region->add_option("--kd", kd_arg)->required();
  region->add_option("--out", out)->required();

  CLI::App* examples = app.add_subcommand("examples", "write bundled benchmark data");
  examples->add_option("--name", name)->required();
  examples->add_option("--out", out)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*analyze) return cmd_analyze(system_path, gains_path, variant, r, T, N, out);
    if (*check) return cmd_check(system_path, gains_path, N, out);
    if (*design) return cmd_design(system_path, starts, seed, t_penalty, N, variant, out);
    if (*sweep_cmd) return cmd_sweep(system_path, gains_path, perturbation, grid_arg, N, out);
    if (*region) return cmd_region(system_path, kp_arg, kd_arg, out);
    if (*examples) return cmd_examples(name, out);
  } catch (const LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace strongstab
