// Copyright 2026 The Expdiag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "expdiag/stats.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>

#include "expdiag/error.h"
#include "expdiag/rng.h"

namespace expdiag {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

}  // namespace

double NormalCdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double NormalQuantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "normal quantile needs p in (0, 1)");
  }
  return boost::math::quantile(boost::math::normal_distribution<>(), p);
}

double TwoSidedNormalP(double z) {
  if (std::isnan(z)) return 1.0;
  return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

double NormalDensity(double x, double variance) {
  return std::exp(LogNormalDensity(x, variance));
}

double LogNormalDensity(double x, double variance) {
  return -kLogSqrt2Pi - 0.5 * std::log(variance) - 0.5 * x * x / variance;
}

double ChiSquaredSurvival(double stat, double df) {
  if (df <= 0) throw Error(ErrorCode::kInvalidArgument, "df must be positive");
  if (stat <= 0.0) return 1.0;
  return boost::math::gamma_q(df / 2.0, stat / 2.0);
}

double DeltaEstimate::std_error() const { return std::sqrt(variance); }

DeltaEstimate DeltaPercentFromMoments(int64_t n_t, double mean_t,
                                      double var_t, int64_t n_c,
                                      double mean_c, double var_c) {
  if (n_t < 2 || n_c < 2) {
    throw Error(ErrorCode::kInsufficientData,
                "insufficient data: each arm needs at least 2 users (got " +
                    std::to_string(n_t) + ", " + std::to_string(n_c) + ")");
  }
  if (mean_c == 0.0) {
    throw Error(ErrorCode::kUndefined, "undefined lift: control mean is zero");
  }
  DeltaEstimate d;
  d.n_t = n_t;
  d.n_c = n_c;
  d.mean_t = mean_t;
  d.mean_c = mean_c;
  d.var_t = var_t;
  d.var_c = var_c;
  d.delta_pct = mean_t / mean_c - 1.0;
  const double mc2 = mean_c * mean_c;
  d.variance = var_t / (mc2 * static_cast<double>(n_t)) +
               var_c * mean_t * mean_t / (mc2 * mc2 * static_cast<double>(n_c));
  if (d.variance > 0.0) {
    d.t_stat = d.delta_pct / std::sqrt(d.variance);
    d.p_value = TwoSidedNormalP(d.t_stat);
  } else if (d.delta_pct == 0.0) {
    d.t_stat = 0.0;
    d.p_value = 1.0;
  } else {
    d.t_stat = std::copysign(std::numeric_limits<double>::infinity(),
                             d.delta_pct);
    d.p_value = 0.0;
  }
  return d;
}

DeltaEstimate DeltaPercent(const RangeSummary& treatment,
                           const RangeSummary& control) {
  if (treatment.n < 2 || control.n < 2) {
    return DeltaPercentFromMoments(treatment.n, 0, 0, control.n, 0, 0);
  }
  return DeltaPercentFromMoments(treatment.n, treatment.mean(),
                                 treatment.variance(), control.n,
                                 control.mean(), control.variance());
}

ChiSquaredResult ChiSquaredGoodnessOfFit(std::span<const int64_t> observed,
                                         std::span<const double> fractions) {
  if (observed.size() != fractions.size() || observed.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "need matching observed counts and fractions for >= 2 cells");
  }
  double fraction_sum = 0.0;
  for (double r : fractions) {
    if (!(r > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "allocation fractions must be positive");
    }
    fraction_sum += r;
  }
  if (std::abs(fraction_sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument,
                "allocation fractions must sum to 1");
  }
  int64_t total = 0;
  for (int64_t n : observed) {
    if (n < 0) throw Error(ErrorCode::kInvalidArgument, "negative count");
    total += n;
  }
  if (total == 0) {
    throw Error(ErrorCode::kInsufficientData, "zero total count");
  }
  ChiSquaredResult result;
  result.df = static_cast<int>(observed.size()) - 1;
  for (size_t i = 0; i < observed.size(); ++i) {
    const double e = static_cast<double>(total) * fractions[i];
    const double diff = static_cast<double>(observed[i]) - e;
    result.expected.push_back(e);
    result.stat += diff * diff / e;
  }
  result.p_value = ChiSquaredSurvival(result.stat, result.df);
  return result;
}

WelchResult WelchT(double a, double var_a, double b, double var_b) {
  if (var_a < 0.0 || var_b < 0.0 || std::isnan(var_a) || std::isnan(var_b)) {
    throw Error(ErrorCode::kInvalidArgument, "variances must be >= 0");
  }
  WelchResult r;
  const double var = var_a + var_b;
  if (var == 0.0) {
    r.degenerate = true;
    if (a == b) {
      r.t = 0.0;
      r.p_value = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), a - b);
      r.p_value = 0.0;
    }
    return r;
  }
  r.t = (a - b) / std::sqrt(var);
  r.p_value = TwoSidedNormalP(r.t);
  return r;
}

std::vector<size_t> BenjaminiHochberg(std::span<const double> p_values,
                                      double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "FDR level q must be in (0, 1)");
  }
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "p-values must be in [0, 1]");
    }
  }
  const size_t m = p_values.size();
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return p_values[a] < p_values[b];
  });
  size_t cutoff = 0;
  for (size_t i = 0; i < m; ++i) {
    if (p_values[order[i]] <=
        static_cast<double>(i + 1) * q / static_cast<double>(m)) {
      cutoff = i + 1;
    }
  }
  std::vector<size_t> discoveries(order.begin(), order.begin() + cutoff);
  std::sort(discoveries.begin(), discoveries.end());
  return discoveries;
}

Eigen::VectorXd OlsFit::ExternallyStudentized() const {
  const Eigen::Index n = residuals.size();
  const Eigen::Index p = coefficients.size();
  const double rss = residuals.squaredNorm();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double one_minus_h = 1.0 - leverage(i);
    if (one_minus_h <= 1e-12 || n - p - 1 <= 0) {
      out(i) = 0.0;
      continue;
    }
    const double e = residuals(i);
    const double s2 = (rss - e * e / one_minus_h) / static_cast<double>(n - p - 1);
    out(i) = s2 > 0.0 ? e / std::sqrt(s2 * one_minus_h)
                      : (e == 0.0 ? 0.0
                                  : std::copysign(
                                        std::numeric_limits<double>::infinity(),
                                        e));
  }
  return out;
}

OlsFit Ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           const std::vector<std::string>& column_names) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "design and response differ in length");
  }
  if (n < p + 1) {
    throw Error(ErrorCode::kInsufficientData,
                "regression needs more rows than columns");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) {
    std::string names;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < p; ++i) {
      const int col = perm(i);
      if (!names.empty()) names += ", ";
      names += static_cast<size_t>(col) < column_names.size()
                   ? column_names[col]
                   : "column " + std::to_string(col);
    }
    throw Error(ErrorCode::kUnidentifiable,
                "design matrix is rank deficient; collinear: " + names);
  }
  OlsFit fit;
  fit.coefficients = qr.solve(y);
  fit.fitted = x * fit.coefficients;
  fit.residuals = y - fit.fitted;
  const double rss = fit.residuals.squaredNorm();
  const double tss = (y.array() - y.mean()).square().sum();
  fit.r_squared = tss > 0.0 ? 1.0 - rss / tss : 0.0;
  fit.sigma_sq = rss / static_cast<double>(n - p);

  // Thin Q gives the leverages; R gives (X'X)^-1 for the standard errors.
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
  fit.leverage = q.rowwise().squaredNorm();
  Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd diag_permuted = r_inv.rowwise().squaredNorm();
  fit.std_errors.resize(p);
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index i = 0; i < p; ++i) {
    fit.std_errors(perm(i)) = std::sqrt(fit.sigma_sq * diag_permuted(i));
  }
  return fit;
}

double TwoGroupLogLikelihood(std::span<const NormalizedEffect> records,
                             const TwoGroupPrior& prior) {
  double total = 0.0;
  for (const auto& r : records) {
    const double s = 1.0 / r.n_e;
    const double l0 = std::log1p(-prior.pi1) + LogNormalDensity(r.delta, s);
    const double l1 = prior.pi1 > 0.0
                          ? std::log(prior.pi1) +
                                LogNormalDensity(r.delta, s + prior.v_sq)
                          : -std::numeric_limits<double>::infinity();
    const double hi = std::max(l0, l1);
    total += hi + std::log(std::exp(l0 - hi) + std::exp(l1 - hi));
  }
  return total;
}

namespace {

// Expected complete-data log-likelihood of the alternative component.
double AlternativeQ(std::span<const NormalizedEffect> records,
                    const std::vector<double>& resp, double v_sq) {
  double q = 0.0;
  for (size_t i = 0; i < records.size(); ++i) {
    q += resp[i] * LogNormalDensity(records[i].delta, 1.0 / records[i].n_e + v_sq);
  }
  return q;
}

}  // namespace

EmFit FitTwoGroupEm(std::span<const NormalizedEffect> records,
                    const EmOptions& options) {
  if (records.size() < 20) {
    throw Error(ErrorCode::kInsufficientData,
                "two-group fit needs at least 20 records");
  }
  double mean = 0.0;
  double mean_s = 0.0;
  double max_sq = 0.0;
  for (const auto& r : records) {
    if (!(r.n_e > 0.0) || !std::isfinite(r.delta)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "records need N_e > 0 and finite effects");
    }
    mean += r.delta;
    mean_s += 1.0 / r.n_e;
    max_sq = std::max(max_sq, r.delta * r.delta);
  }
  const double m = static_cast<double>(records.size());
  mean /= m;
  mean_s /= m;
  double var = 0.0;
  for (const auto& r : records) var += (r.delta - mean) * (r.delta - mean);
  var /= m;

  EmFit fit;
  fit.prior = {0.5, std::max(var - mean_s, 1e-8)};
  double ll = TwoGroupLogLikelihood(records, fit.prior);
  fit.log_likelihood.push_back(ll);
  std::vector<double> resp(records.size());
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    // E step.
    double resp_sum = 0.0;
    for (size_t i = 0; i < records.size(); ++i) {
      const double s = 1.0 / records[i].n_e;
      const double l0 = std::log1p(-fit.prior.pi1) +
                        LogNormalDensity(records[i].delta, s);
      const double l1 = std::log(fit.prior.pi1) +
                        LogNormalDensity(records[i].delta, s + fit.prior.v_sq);
      resp[i] = 1.0 / (1.0 + std::exp(l0 - l1));
      resp_sum += resp[i];
    }
    // M step: pi1 in closed form, V^2 by a bounded 1-D search that is only
    // accepted when it does not lower the expected log-likelihood.
    TwoGroupPrior next = fit.prior;
    next.pi1 = std::clamp(resp_sum / m, 1e-12, 1.0 - 1e-12);
    if (max_sq > 0.0) {
      auto negq = [&](double v) { return -AlternativeQ(records, resp, v); };
      auto [v_best, q_best] =
          boost::math::tools::brent_find_minima(negq, 0.0, max_sq, 52);
      if (q_best <= negq(fit.prior.v_sq)) next.v_sq = v_best;
    }
    const double next_ll = TwoGroupLogLikelihood(records, next);
    if (!(next_ll >= ll)) {
      fit.converged = true;
      break;
    }
    fit.prior = next;
    fit.iterations = iter + 1;
    fit.log_likelihood.push_back(next_ll);
    const bool done = (next_ll - ll) / m < options.tolerance;
    ll = next_ll;
    if (done) {
      fit.converged = true;
      break;
    }
  }
  // Null fit: every record N(0, 1/N_e).
  double ll_null = 0.0;
  for (const auto& r : records) ll_null += LogNormalDensity(r.delta, 1.0 / r.n_e);
  // 5.991: chi-squared(2) at 0.95.
  if (fit.prior.v_sq <= 1e-3 * mean_s || 2.0 * (ll - ll_null) < 5.991) {
    fit.unidentifiable = true;
    fit.prior = {0.0, 0.0};
  }
  return fit;
}

double NullCoSignificanceProportion(double rho, double alpha, int64_t n_sim,
                                    uint64_t seed) {
  if (!(std::abs(rho) <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "|rho| must be <= 1");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must be in (0, 1)");
  }
  if (n_sim < 10000) {
    throw Error(ErrorCode::kInvalidArgument, "n_sim must be >= 10000");
  }
  const double z_crit = NormalQuantile(1.0 - alpha / 2.0);
  const double ortho = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  constexpr int64_t kBlock = 4096;
  int64_t y_sig = 0;
  int64_t both_sig = 0;
  for (int64_t start = 0; start < n_sim; start += kBlock) {
    auto engine = KeyedEngine(seed, static_cast<uint64_t>(start / kBlock));
    std::normal_distribution<double> normal;
    const int64_t end = std::min(n_sim, start + kBlock);
    for (int64_t i = start; i < end; ++i) {
      const double zy = normal(engine);
      const double e = normal(engine);
      if (std::abs(zy) <= z_crit) continue;
      ++y_sig;
      const double zx = rho * zy + ortho * e;
      if (std::abs(zx) > z_crit) ++both_sig;
    }
  }
  if (y_sig == 0) return 0.0;
  return static_cast<double>(both_sig) / static_cast<double>(y_sig);
}

}  // namespace expdiag
