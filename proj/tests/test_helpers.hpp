#pragma once

#include <random>

#include "strongstab/model.hpp"

namespace strongstab::testing {

inline Mat random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  return Mat::NullaryExpr(rows, cols, [&]() { return gauss(rng); });
}

// small random plant; B and C regenerated until full rank (a.s. immediate)
inline DelaySystem random_system(std::mt19937_64& rng, int n, int m, int p, int K,
                                 double delay_scale = 1.0) {
  DelaySystem sys;
  sys.n = n;
  sys.m = m;
  sys.p = p;
  sys.A.push_back(random_matrix(rng, n, n));
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  double tau = 0.0;
  for (int k = 0; k < K; ++k) {
    tau += unif(rng) * delay_scale;
    sys.delays.push_back(tau);
    sys.A.push_back(random_matrix(rng, n, n, 0.5));
  }
  for (int attempt = 0; attempt < 10; ++attempt) {
    sys.B = random_matrix(rng, n, m);
    sys.C = random_matrix(rng, p, n);
    try {
      sys.validate();
      return sys;
    } catch (const LoadError&) {
    }
  }
  throw std::runtime_error("random_system: could not draw a full-rank plant");
}

inline PidGains random_gains(std::mt19937_64& rng, int m, int p, double scale = 0.5) {
  return PidGains::from(random_matrix(rng, m, p, scale), random_matrix(rng, m, p, scale),
                        random_matrix(rng, m, p, scale));
}

}  // namespace strongstab::testing
