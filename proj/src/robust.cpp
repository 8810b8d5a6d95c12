#include "strongstab/robust.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "strongstab/parallel.hpp"

namespace strongstab {

namespace {

struct TargetRef {
  bool is_A;
  int k;      // A index
  bool is_B;  // else C when !is_A
};

TargetRef parse_target(const std::string& t, const DelaySystem& sys) {
  if (t == "B") return {false, 0, true};
  if (t == "C") return {false, 0, false};
  if (t.size() >= 2 && t[0] == 'A') {
    int k = std::stoi(t.substr(1));
    if (k < 0 || k > sys.K())
      throw std::invalid_argument("uncertainty target " + t + " out of range");
    return {true, k, false};
  }
  throw std::invalid_argument("unknown uncertainty target: " + t);
}

const Mat& target_matrix(const DelaySystem& sys, const TargetRef& ref) {
  if (ref.is_A) return sys.A[ref.k];
  return ref.is_B ? sys.B : sys.C;
}

}  // namespace

void UncertaintySet::validate(const DelaySystem& sys) const {
  for (const UncertaintyBlock& blk : blocks) {
    TargetRef ref = parse_target(blk.target, sys);
    const Mat& R = target_matrix(sys, ref);
    if (blk.G.rows() != R.rows() || blk.H.cols() != R.cols())
      throw std::invalid_argument("uncertainty block " + blk.target +
                                  ": G/H outer dimensions must match the target matrix");
  }
  if (delay_bounds.size() != sys.delays.size())
    throw std::invalid_argument("need one delay bound per delay");
  for (size_t k = 0; k < delay_bounds.size(); ++k) {
    if (delay_bounds[k] < 0.0 || delay_bounds[k] >= sys.delays[k])
      throw std::invalid_argument("delay bounds must satisfy 0 <= bound < tau_k");
  }
}

UncertaintySet load_uncertainty(const std::string& path, const DelaySystem& sys) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open uncertainty file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw LoadError(std::string("invalid uncertainty JSON: ") + e.what());
  }
  UncertaintySet unc;
  if (j.contains("blocks"))
    for (const auto& jb : j["blocks"]) {
      UncertaintyBlock b;
      b.target = jb.at("target").get<std::string>();
      auto mat = [](const json& m) {
        Mat M(m.size(), m[0].size());
        for (size_t i = 0; i < m.size(); ++i)
          for (size_t k = 0; k < m[i].size(); ++k) M(i, k) = m[i][k].get<double>();
        return M;
      };
      b.G = mat(jb.at("G"));
      b.H = mat(jb.at("H"));
      unc.blocks.push_back(std::move(b));
    }
  if (j.contains("delay_bounds"))
    for (const auto& d : j["delay_bounds"]) unc.delay_bounds.push_back(d.get<double>());
  unc.validate(sys);
  return unc;
}

DelaySystem realize_system(const DelaySystem& sys, const UncertaintySet& unc,
                           const std::vector<Mat>& delta, const std::vector<double>& dtau) {
  unc.validate(sys);
  if (delta.size() != unc.blocks.size())
    throw std::invalid_argument("realize_system: need one delta per uncertainty block");
  if (dtau.size() != unc.delay_bounds.size())
    throw std::invalid_argument("realize_system: need one delay shift per delay");
  for (size_t l = 0; l < delta.size(); ++l) {
    const UncertaintyBlock& blk = unc.blocks[l];
    if (delta[l].rows() != blk.G.cols() || delta[l].cols() != blk.H.rows())
      throw std::invalid_argument("realize_system: delta dimensions mismatch block " +
                                  blk.target);
    if (delta[l].norm() > 1.0 + 1e-12)
      throw std::invalid_argument("realize_system: ||delta||_F exceeds 1");
  }
  for (size_t k = 0; k < dtau.size(); ++k)
    if (std::abs(dtau[k]) > unc.delay_bounds[k] + 1e-12)
      throw std::invalid_argument("realize_system: |delta tau| exceeds its bound");

  DelaySystem out = sys;
  for (size_t l = 0; l < delta.size(); ++l) {
    TargetRef ref = parse_target(unc.blocks[l].target, sys);
    Mat upd = unc.blocks[l].G * delta[l] * unc.blocks[l].H;
    if (ref.is_A)
      out.A[ref.k] += upd;
    else if (ref.is_B)
      out.B += upd;
    else
      out.C += upd;
  }
  std::vector<std::pair<double, Mat>> delayed;
  for (int k = 1; k <= sys.K(); ++k)
    delayed.emplace_back(sys.delays[k - 1] + dtau[k - 1], out.A[k]);
  std::sort(delayed.begin(), delayed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  out.delays.clear();
  out.A.resize(1);
  for (auto& [tau, Ak] : delayed) {
    if (!out.delays.empty() && tau == out.delays.back())
      out.A.back() += Ak;  // coincident perturbed delays merge
    else {
      out.delays.push_back(tau);
      out.A.push_back(std::move(Ak));
    }
  }
  out.validate();
  return out;
}

namespace {

struct Sample {
  std::vector<Mat> delta;
  std::vector<double> dtau;
};

// rank-one extreme aligned with the dominant singular directions of G and H
Mat aligned_extreme(const UncertaintyBlock& blk, double sign) {
  Eigen::JacobiSVD<Mat> svd_g(blk.G, Eigen::ComputeThinV);
  Eigen::JacobiSVD<Mat> svd_h(blk.H, Eigen::ComputeThinU);
  Vec u = svd_g.matrixV().col(0);
  Vec v = svd_h.matrixU().col(0);
  return sign * u * v.transpose();
}

// uniform draw on the unit Frobenius ball: normalized Gaussian, radius U^{1/(rows*cols)}
Mat ball_uniform(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = gauss(rng);
  double nrm = M.norm();
  if (nrm == 0.0) return Mat::Zero(rows, cols);
  double radius = std::pow(unif(rng), 1.0 / (rows * cols));
  return M * (radius / nrm);
}

}  // namespace

WorstCaseResult sampled_worst_case(const DelaySystem& sys, const UncertaintySet& unc,
                                   const PidGains& gains, int nsamples, std::uint64_t seed,
                                   const SolverOpts& opts) {
  if (nsamples < 1) throw std::invalid_argument("sampled_worst_case: Nsamples >= 1 required");
  unc.validate(sys);
  const size_t L = unc.blocks.size();
  const size_t K = unc.delay_bounds.size();

  auto zero_sample = [&]() {
    Sample s;
    for (const UncertaintyBlock& blk : unc.blocks)
      s.delta.push_back(Mat::Zero(blk.G.cols(), blk.H.rows()));
    s.dtau.assign(K, 0.0);
    return s;
  };

  // deterministic probes: nominal, one-at-a-time matrix extremes and delay endpoints
  std::vector<Sample> samples;
  samples.push_back(zero_sample());
  for (size_t l = 0; l < L; ++l)
    for (double sign : {1.0, -1.0}) {
      Sample s = zero_sample();
      s.delta[l] = aligned_extreme(unc.blocks[l], sign);
      samples.push_back(std::move(s));
    }
  for (size_t k = 0; k < K; ++k)
    for (double sign : {1.0, -1.0}) {
      if (unc.delay_bounds[k] == 0.0) continue;
      Sample s = zero_sample();
      s.dtau[k] = sign * unc.delay_bounds[k];
      samples.push_back(std::move(s));
    }
  // random draws; substream per sample index keeps the set nested across Nsamples
  for (int i = 0; i < nsamples; ++i) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x1234ABCDULL + i);
    Sample s;
    for (const UncertaintyBlock& blk : unc.blocks)
      s.delta.push_back(ball_uniform(blk.G.cols(), blk.H.rows(), rng));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (size_t k = 0; k < K; ++k) s.dtau.push_back(unif(rng) * unc.delay_bounds[k]);
    samples.push_back(std::move(s));
  }

  const int total = static_cast<int>(samples.size());
  std::vector<double> absc(total, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> alph(total, std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> ok(total, false);
  parallel_for_indexed(total, [&](int i) {
    try {
      DelaySystem realized = realize_system(sys, unc, samples[i].delta, samples[i].dtau);
      absc[i] =
          spectral_abscissa(assemble_pencil(realized, gains, LoopConfig::nominal()), opts);
      double a = -std::numeric_limits<double>::infinity();
      for (Complex e : bkdc_eigenvalues(realized, gains.Kd)) a = std::max(a, e.real());
      alph[i] = a;
      ok[i] = true;
    } catch (const std::exception&) {
    }
  });

  WorstCaseResult res;
  res.abscissa_lb = -std::numeric_limits<double>::infinity();
  res.alpha_ps_lb = -std::numeric_limits<double>::infinity();
  res.samples_evaluated = 0;
  res.solver_failures = 0;
  int best = -1;
  for (int i = 0; i < total; ++i) {
    if (!ok[i]) {
      ++res.solver_failures;
      continue;
    }
    ++res.samples_evaluated;
    if (absc[i] > res.abscissa_lb) {
      res.abscissa_lb = absc[i];
      best = i;
    }
    res.alpha_ps_lb = std::max(res.alpha_ps_lb, alph[i]);
  }
  if (best < 0) throw std::runtime_error("sampled_worst_case: every sample failed to solve");
  res.argmax_delta = samples[best].delta;
  res.argmax_dtau = samples[best].dtau;
  return res;
}

}  // namespace strongstab
