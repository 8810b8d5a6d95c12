#pragma once

#include <vector>

#include "strongstab/model.hpp"

namespace strongstab {

// Bundled verification plants and controllers used by the test and
// acceptance suites and exposed through the `examples` CLI command.

/// Oscillator with transfer function -s/(s^2 - omega0^2), SISO.
DelaySystem second_order_system(double omega0 = 1.0);

/// Unstable third-order SISO plant (s^2+1)/(s^3+s^2-(1/3)s-1); needs both
/// P and D action for stabilization.
DelaySystem third_order_system();

/// Six-state, three-delay MIMO design benchmark with its optimized PID gains.
DelaySystem benchmark_6x3x2_system();
PidGains benchmark_6x3x2_gains();

/// Twelve-state linearized quadcopter hover model (no state delays) with the
/// two bundled controllers: the PID design and the input-delay redesign.
DelaySystem quadcopter_system();
PidGains quadcopter_gains_pid();
PidGains quadcopter_gains_input_delay();

/// Scalar PD gains packed as 1x1 PID matrices (Ki = 0).
PidGains pd_gains(double kp, double kd);

/// Reference (kp, kd) sample points of the third-order RHP-count map with
/// their expected closed-right-half-plane root counts.
struct RegionSample {
  double kp, kd;
  int count;
};
std::vector<RegionSample> third_order_region_samples();

}  // namespace strongstab
