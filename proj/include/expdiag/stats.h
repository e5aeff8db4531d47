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

#ifndef EXPDIAG_STATS_H_
#define EXPDIAG_STATS_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "expdiag/store.h"

namespace expdiag {

double NormalCdf(double z);
// Inverse of NormalCdf on (0, 1).
double NormalQuantile(double p);
// 2 * P(Z > |z|).
double TwoSidedNormalP(double z);
// Density of N(0, variance) at x, and its log.
double NormalDensity(double x, double variance);
double LogNormalDensity(double x, double variance);
// P(chi2_df > stat).
double ChiSquaredSurvival(double stat, double df);

// Percent lift of treatment over control with its Delta-method variance.
struct DeltaEstimate {
  double delta_pct = 0.0;  // mean_t / mean_c - 1
  double variance = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  int64_t n_t = 0;
  int64_t n_c = 0;
  double mean_t = 0.0;
  double mean_c = 0.0;
  double var_t = 0.0;
  double var_c = 0.0;

  double std_error() const;
};

// Throws kInsufficientData when either n < 2 and kUndefined ("undefined
// lift") when the control mean is zero.
DeltaEstimate DeltaPercent(const RangeSummary& treatment,
                           const RangeSummary& control);
DeltaEstimate DeltaPercentFromMoments(int64_t n_t, double mean_t,
                                      double var_t, int64_t n_c,
                                      double mean_c, double var_c);

struct ChiSquaredResult {
  double stat = 0.0;
  double p_value = 1.0;
  int df = 0;
  std::vector<double> expected;
};

// Goodness of fit of observed counts to N * fractions, df = #cells - 1.
ChiSquaredResult ChiSquaredGoodnessOfFit(std::span<const int64_t> observed,
                                         std::span<const double> fractions);

struct WelchResult {
  double t = 0.0;
  double p_value = 1.0;
  // Both variances were zero.
  bool degenerate = false;
};

// Normal-approximation test of a - b with variance var_a + var_b.
WelchResult WelchT(double a, double var_a, double b, double var_b);

// Step-up FDR procedure. Returns indices of discoveries in ascending order.
std::vector<size_t> BenjaminiHochberg(std::span<const double> p_values,
                                      double q);

struct OlsFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd std_errors;
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  // Diagonal of the hat matrix.
  Eigen::VectorXd leverage;
  double r_squared = 0.0;
  double sigma_sq = 0.0;  // residual variance, RSS / (n - p)

  // Residuals scaled by their leave-one-out standard deviation.
  Eigen::VectorXd ExternallyStudentized() const;
};

// Least squares via column-pivoting QR. R^2 is relative to the intercept-only
// model (0 when y is constant). Throws kInsufficientData when rows <= columns
// and kUnidentifiable on rank deficiency, naming the collinear columns.
OlsFit Ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           const std::vector<std::string>& column_names = {});

struct NormalizedEffect {
  double delta = 0.0;  // Delta / sigma
  double n_e = 0.0;    // effective sample size, 1 / (1/N_t + 1/N_c)
};

struct TwoGroupPrior {
  double pi1 = 0.0;   // P(H1)
  double v_sq = 0.0;  // effect-size variance under H1
};

struct EmOptions {
  // Stop when the mean per-record log-likelihood gains less than this.
  double tolerance = 1e-8;
  int max_iterations = 500;
};

struct EmFit {
  TwoGroupPrior prior;
  int iterations = 0;
  bool converged = false;
  // V^2 collapsed onto the null spread, or the mixture fits no better than
  // the pure null (likelihood ratio below the 0.05 chi-squared(2) cutoff).
  // The prior is then reported as the pure null (pi1 = 0, V^2 = 0).
  bool unidentifiable = false;
  // Total log-likelihood after initialization and after every iteration.
  std::vector<double> log_likelihood;
};

// Mixture of N(0, 1/N_e) and N(0, 1/N_e + V^2) over normalized effects.
double TwoGroupLogLikelihood(std::span<const NormalizedEffect> records,
                             const TwoGroupPrior& prior);
// Needs >= 20 records with positive N_e.
EmFit FitTwoGroupEm(std::span<const NormalizedEffect> records,
                    const EmOptions& options = {});

// Under H0 with corr(Z_X, Z_Y) = rho, P(|Z_X| > z | |Z_Y| > z) at two-sided
// level alpha, estimated from n_sim >= 10000 seeded draws.
double NullCoSignificanceProportion(double rho, double alpha, int64_t n_sim,
                                    uint64_t seed);

}  // namespace expdiag

#endif  // EXPDIAG_STATS_H_
