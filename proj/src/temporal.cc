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

#include "expdiag/temporal.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "expdiag/error.h"

namespace expdiag {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<DeltaEstimate> TryDelta(const RangeSummary& t,
                                      const RangeSummary& c) {
  try {
    return DeltaPercent(t, c);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInsufficientData ||
        e.code() == ErrorCode::kUndefined) {
      return std::nullopt;
    }
    throw;
  }
}

std::string Pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f%%", 100.0 * x);
  return buf;
}

std::string Num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

bool IsWeekend(std::string_view day) { return day == "sat" || day == "sun"; }

}  // namespace

double WkModel(double p, double r, int k) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "w_k needs 0 < p <= 1, got " + Num(p));
  }
  if (!(r >= 0.0) || !std::isfinite(r)) {
    throw Error(ErrorCode::kInvalidArgument, "w_k needs finite r >= 0");
  }
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "w_k needs k >= 1");
  const double q = 1.0 - p;
  const double off = q - std::pow(q, k);
  const double on = p * r;
  if (on + off == 0.0) return 1.0;
  return on / (off + on);
}

double WkLimit(double p, double r) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "w_k needs 0 < p <= 1, got " + Num(p));
  }
  if (!(r >= 0.0) || !std::isfinite(r)) {
    throw Error(ErrorCode::kInvalidArgument, "w_k needs finite r >= 0");
  }
  const double on = p * r;
  if (on + (1.0 - p) == 0.0) return 1.0;
  return on / (1.0 - p + on);
}

ImpactSeries BuildImpactSeries(const IngestedLog& log,
                               std::string_view metric_id, ArmPair arms) {
  ImpactSeries s;
  s.metric_id = std::string(metric_id);
  s.coverage = ClassifyCoverage(log, metric_id).coverage;
  s.arms = arms;
  s.first_day = log.first_day();
  s.start_weekday = log.config().start_weekday;
  const int metric = log.MetricIndex(metric_id);
  for (int d = log.first_day(); d <= log.last_day(); ++d) {
    const auto single = BuildMetricSummaries(
        log, DayRange{d, d}, PopulationMode::kSingleDay, metric);
    const auto cross = BuildMetricSummaries(
        log, DayRange{log.first_day(), d}, PopulationMode::kTriggered, metric);
    s.single_t.push_back(single[arms.treatment]);
    s.single_c.push_back(single[arms.control]);
    s.cross_t.push_back(cross[arms.treatment]);
    s.cross_c.push_back(cross[arms.control]);
    s.single_day.push_back(TryDelta(single[arms.treatment], single[arms.control]));
    s.cross_day.push_back(TryDelta(cross[arms.treatment], cross[arms.control]));
  }
  return s;
}

PrEstimate EstimatePR(const DecomposedSums& sums) {
  const ArmDecomposition& c = sums.control();
  PrEstimate out;
  if (c.n == 0) {
    throw Error(ErrorCode::kInsufficientData, "no triggered control users");
  }
  const double user_days =
      static_cast<double>(c.n) * static_cast<double>(sums.range.length());
  out.p = static_cast<double>(c.trigger_days) / user_days;
  if (c.off_days == 0) {
    out.note = "no off-trigger days: r undefined";
    return out;
  }
  if (c.trigger_days == 0) {
    out.note = "no trigger days: r undefined";
    return out;
  }
  const double per_off = c.sum_o / static_cast<double>(c.off_days);
  if (per_off == 0.0) {
    out.note = "zero off-trigger contribution: r undefined";
    return out;
  }
  out.r = (c.sum_i / static_cast<double>(c.trigger_days)) / per_off;
  return out;
}

PrEstimate EstimatePR(const IngestedLog& log, std::string_view metric_id,
                      DayRange range) {
  return EstimatePR(DecomposeInOff(log, metric_id, range));
}

TriggerDayFinding DetectTriggerDay(const ImpactSeries& series,
                                   const DecomposedSums& decomposed,
                                   const TriggerDayOptions& options) {
  const int k = series.days();
  if (k < 3) {
    throw Error(ErrorCode::kInsufficientData,
                "trigger-day detection needs at least 3 days");
  }
  TriggerDayFinding f;
  f.metric_id = series.metric_id;
  f.coverage = series.coverage;
  f.k = k;

  // Pool the single-day sums: together they are the trigger-day part of the
  // cumulative totals.
  double sum_i_t = 0.0;
  double sum_i_c = 0.0;
  for (int d = 0; d < k; ++d) {
    sum_i_t += series.single_t[d].sum;
    sum_i_c += series.single_c[d].sum;
    const double x_c = series.cross_c[d].sum;
    f.w_observed.push_back(x_c != 0.0 ? sum_i_c / x_c : kNaN);
  }
  const RangeSummary& xt = series.cross_t.back();
  const RangeSummary& xc = series.cross_c.back();
  auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
  };
  if (!close(sum_i_t, decomposed.treatment().sum_i) ||
      !close(sum_i_c, decomposed.control().sum_i) ||
      xt.n != decomposed.treatment().n || xc.n != decomposed.control().n) {
    throw Error(ErrorCode::kDataIntegrity,
                "single-day sums do not add up to the in-trigger totals");
  }
  if (xc.sum == 0.0 || sum_i_c == 0.0) {
    throw Error(ErrorCode::kUndefined, "undefined lift: zero control total");
  }
  f.w_k = sum_i_c / xc.sum;
  const double nt = static_cast<double>(xt.n);
  const double nc = static_cast<double>(xc.n);
  f.delta_x = (xt.sum / nt) / (xc.sum / nc) - 1.0;
  f.delta_i = (sum_i_t / nt) / (sum_i_c / nc) - 1.0;

  const PrEstimate pr = EstimatePR(decomposed);
  f.p_hat = pr.p;
  f.r_hat = pr.r;
  if (f.p_hat > 0.0 && f.r_hat) {
    f.w_limit = WkLimit(f.p_hat, *f.r_hat);
    for (int d = 1; d <= k; ++d) f.w_model.push_back(WkModel(f.p_hat, *f.r_hat, d));
  } else {
    f.w_limit = 1.0;
    f.w_model.assign(k, 1.0);
    if (!pr.note.empty()) f.reasons.push_back(pr.note);
  }

  if (series.coverage == Coverage::kFullyCovered) {
    f.delta_o = 0.0;
    f.projected_impact = f.delta_i;
    f.reasons.push_back("fully covered: w = 1, no off-trigger impact");
    return f;
  }

  const double sum_o_t = xt.sum - sum_i_t;
  const double sum_o_c = xc.sum - sum_i_c;
  const double var_x_t = xt.variance();
  const double var_x_c = xc.variance();
  const auto bound_i = DeltaPercentFromMoments(xt.n, sum_i_t / nt, var_x_t,
                                               xc.n, sum_i_c / nc, var_x_c);
  f.var_i_bound = bound_i.variance;
  if (sum_o_c == 0.0) {
    f.projected_impact = f.delta_i;
    f.reasons.push_back("zero off-trigger control total: off-trigger lift "
                        "undefined");
    return f;
  }
  const auto bound_o = DeltaPercentFromMoments(xt.n, sum_o_t / nt, var_x_t,
                                               xc.n, sum_o_c / nc, var_x_c);
  f.delta_o = bound_o.delta_pct;
  f.var_o_bound = bound_o.variance;
  const WelchResult welch =
      WelchT(f.delta_i, f.var_i_bound, f.delta_o, f.var_o_bound);
  f.t_stat = welch.t;
  f.p_value = welch.p_value;
  f.projected_impact = f.w_limit * f.delta_i + (1.0 - f.w_limit) * f.delta_o;

  const bool small_w = f.w_k < options.w_threshold;
  const bool differ = f.p_value < options.alpha;
  f.reasons.push_back("w_k = " + Num(f.w_k) + (small_w ? " < " : " >= ") +
                      Num(options.w_threshold));
  f.reasons.push_back("in-trigger " + Pct(f.delta_i) + " vs off-trigger " +
                      Pct(f.delta_o) + ": p = " + Num(f.p_value) +
                      (differ ? " < " : " >= ") + Num(options.alpha));
  f.flag = small_w && differ;
  if (f.flag) {
    f.reasons.push_back("cross-day impact expected to settle near " +
                        Pct(f.projected_impact));
  }
  return f;
}

NoveltyFinding DetectNovelty(
    std::span<const std::optional<DeltaEstimate>> single_day,
    std::optional<std::string_view> start_weekday,
    const NoveltyOptions& options) {
  NoveltyFinding f;
  f.days = static_cast<int>(single_day.size());
  std::vector<int> days;
  for (int t = 0; t < f.days; ++t) {
    if (single_day[t]) {
      days.push_back(t + 1);
      f.observed.push_back(single_day[t]->delta_pct);
    } else {
      f.observed.push_back(kNaN);
    }
  }
  if (days.size() < 7) {
    throw Error(ErrorCode::kInsufficientData,
                "insufficient days: novelty detection needs 7 single-day "
                "impacts, got " + std::to_string(days.size()));
  }
  const double a = options.alpha_trend;
  const double g = options.gamma;
  const int n = static_cast<int>(days.size());
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double t = days[i];
    x(i, 0) = 1.0;
    x(i, 1) = std::pow(t, -a);
    x(i, 2) = std::pow(t, -g);
    y(i) = f.observed[days[i] - 1];
  }
  const OlsFit fit = Ols(x, y, {"intercept", "slow_decay", "fast_decay"});
  f.beta0 = fit.coefficients(0);
  f.beta1 = fit.coefficients(1);
  f.beta2 = fit.coefficients(2);
  f.r_squared = fit.r_squared;
  auto curve = [&](double t) {
    return f.beta0 + f.beta1 * std::pow(t, -a) + f.beta2 * std::pow(t, -g);
  };
  for (int t = 1; t <= f.days; ++t) f.fitted.push_back(curve(t));

  // The slope a*b1*t^(g-a) + g*b2 (times -t^(-g-1)) changes sign at most
  // once on t > 0.
  const double T = static_cast<double>(days.back());
  bool analytic = true;
  if (f.beta1 != 0.0 && g != a) {
    const double ratio = -g * f.beta2 / (a * f.beta1);
    if (ratio > 0.0) {
      const double root = std::pow(ratio, 1.0 / (g - a));
      if (root > 1.0 && root < T) {
        f.turning_point = root;
        analytic = false;
      }
    }
  }
  bool grid = true;
  {
    constexpr int kGrid = 1000;
    int sign = 0;
    double prev = curve(1.0);
    const double scale = std::max(1e-12, std::abs(curve(1.0) - curve(T)));
    for (int i = 1; i < kGrid; ++i) {
      const double t = 1.0 + (T - 1.0) * i / (kGrid - 1);
      const double cur = curve(t);
      const double step = cur - prev;
      if (std::abs(step) > 1e-9 * scale) {
        const int s = step > 0 ? 1 : -1;
        if (sign != 0 && s != sign) grid = false;
        sign = s;
      }
      prev = cur;
    }
  }
  f.monotone = analytic && grid;

  int max_i = days.front();
  int min_i = days.front();
  for (int t : days) {
    if (single_day[t - 1]->delta_pct > single_day[max_i - 1]->delta_pct) max_i = t;
    if (single_day[t - 1]->delta_pct < single_day[min_i - 1]->delta_pct) min_i = t;
  }
  f.max_day = max_i;
  f.min_day = min_i;
  const auto& hi = *single_day[max_i - 1];
  const auto& lo = *single_day[min_i - 1];
  const WelchResult welch =
      WelchT(hi.delta_pct, hi.variance, lo.delta_pct, lo.variance);
  f.extremes_t = welch.t;
  f.extremes_p = welch.p_value;

  const bool fits = f.r_squared >= options.r2_min;
  const bool extremes = f.extremes_p < options.alpha_extremes;
  f.reasons.push_back("R^2 = " + Num(f.r_squared) + (fits ? " >= " : " < ") +
                      Num(options.r2_min));
  f.reasons.push_back(
      std::string("fitted curve ") + (f.monotone ? "monotone" : "not monotone") +
      (f.turning_point ? " (turns at t = " + Num(*f.turning_point) + ")" : ""));
  f.reasons.push_back("day " + std::to_string(max_i) + " " + Pct(hi.delta_pct) +
                      " vs day " + std::to_string(min_i) + " " +
                      Pct(lo.delta_pct) + ": p = " + Num(f.extremes_p) +
                      (extremes ? " < " : " >= ") +
                      Num(options.alpha_extremes));
  f.flag = fits && f.monotone && extremes;
  if (start_weekday && IsWeekend(*start_weekday)) {
    f.caveats.push_back(
        "experiment started on a weekend (" + std::string(*start_weekday) +
        "): a weekday/weekend difference in impact gives the same single-day "
        "trend and is not separated from novelty");
  }
  return f;
}

NoveltyFinding DetectNovelty(const ImpactSeries& series,
                             const NoveltyOptions& options) {
  std::optional<std::string_view> weekday;
  if (series.start_weekday) weekday = *series.start_weekday;
  return DetectNovelty(series.single_day, weekday, options);
}

CohortMagnitude CohortNoveltyMagnitude(const IngestedLog& log,
                                       std::string_view metric_id,
                                       const CohortOptions& options) {
  const auto& config = log.config();
  const int fresh = config.VariantIndex(options.fresh_variant);
  const int seasoned = config.VariantIndex(options.seasoned_variant);
  if (fresh < 0 || seasoned < 0 || fresh == seasoned) {
    throw Error(ErrorCode::kInvalidArgument,
                "cohorts not distinguishable: need variants '" +
                    options.fresh_variant + "' and '" +
                    options.seasoned_variant + "'");
  }
  const ArmPair arms = ResolveArms(config);
  if (arms.control == fresh || arms.control == seasoned) {
    throw Error(ErrorCode::kInvalidArgument,
                "cohorts not distinguishable: a cohort is the control");
  }
  if (options.window < 1) {
    throw Error(ErrorCode::kInvalidArgument, "cohort window must be >= 1");
  }
  if (options.split_day <= log.first_day() ||
      options.split_day > log.last_day()) {
    throw Error(ErrorCode::kInvalidArgument,
                "split day must fall after the first day and inside the run");
  }
  CohortMagnitude out;
  out.metric_id = std::string(metric_id);
  out.window = DayRange{options.split_day,
                        std::min(log.last_day(),
                                 options.split_day + options.window - 1)};
  const int metric = log.MetricIndex(metric_id);
  const PopulationMode mode = out.window.length() == 1
                                  ? PopulationMode::kSingleDay
                                  : PopulationMode::kTriggered;
  const auto sums = BuildMetricSummaries(log, out.window, mode, metric);
  const RangeSummary& c = sums[arms.control];
  for (int v : {fresh, seasoned}) {
    if (sums[v].n < 2) {
      throw Error(ErrorCode::kInsufficientData,
                  "cohort '" + config.variants[v].label + "' is empty in " +
                      out.window.ToString());
    }
  }
  out.fresh = DeltaPercent(sums[fresh], c);
  out.seasoned = DeltaPercent(sums[seasoned], c);
  out.magnitude = out.fresh.delta_pct - out.seasoned.delta_pct;
  // Both lifts share the control mean.
  const double mc = c.mean();
  const double cov = out.fresh.mean_t * out.seasoned.mean_t * c.variance() /
                     (std::pow(mc, 4) * static_cast<double>(c.n));
  const double var =
      std::max(0.0, out.fresh.variance + out.seasoned.variance - 2.0 * cov);
  out.std_error = std::sqrt(var);
  const double z = NormalQuantile(0.975);
  out.ci_low = out.magnitude - z * out.std_error;
  out.ci_high = out.magnitude + z * out.std_error;
  return out;
}

nlohmann::json DeltaToJson(const DeltaEstimate& d) {
  return {{"delta_pct", d.delta_pct}, {"variance", d.variance},
          {"std_error", d.std_error()}, {"t_stat", d.t_stat},
          {"p_value", d.p_value},
          {"n_t", d.n_t},             {"n_c", d.n_c},
          {"mean_t", d.mean_t},       {"mean_c", d.mean_c}};
}

nlohmann::json ImpactSeriesToJson(const ImpactSeries& series) {
  using nlohmann::json;
  json days = json::array();
  for (int d = 0; d < series.days(); ++d) {
    json row = {{"day", series.first_day + d}};
    row["single_day"] =
        series.single_day[d] ? DeltaToJson(*series.single_day[d]) : json();
    row["cross_day"] =
        series.cross_day[d] ? DeltaToJson(*series.cross_day[d]) : json();
    days.push_back(row);
  }
  return {{"metric_id", series.metric_id},
          {"coverage", CoverageName(series.coverage)},
          {"days", days}};
}

nlohmann::json TriggerDayToJson(const TriggerDayFinding& f) {
  nlohmann::json j = {{"metric_id", f.metric_id},
                      {"coverage", CoverageName(f.coverage)},
                      {"k", f.k},
                      {"w_k", f.w_k},
                      {"w_observed", f.w_observed},
                      {"w_model", f.w_model},
                      {"delta_x", f.delta_x},
                      {"delta_i", f.delta_i},
                      {"delta_o", f.delta_o},
                      {"var_i_bound", f.var_i_bound},
                      {"var_o_bound", f.var_o_bound},
                      {"t_stat", f.t_stat},
                      {"p_value", f.p_value},
                      {"p_hat", f.p_hat},
                      {"w_limit", f.w_limit},
                      {"projected_impact", f.projected_impact},
                      {"flag", f.flag},
                      {"reasons", f.reasons}};
  j["r_hat"] = f.r_hat ? nlohmann::json(*f.r_hat) : nlohmann::json();
  return j;
}

nlohmann::json NoveltyToJson(const NoveltyFinding& f) {
  using nlohmann::json;
  json observed = json::array();
  for (double v : f.observed) {
    observed.push_back(std::isnan(v) ? json() : json(v));
  }
  json j = {{"days", f.days},
            {"observed", observed},
            {"fitted", f.fitted},
            {"beta", {f.beta0, f.beta1, f.beta2}},
            {"r_squared", f.r_squared},
            {"monotone", f.monotone},
            {"max_day", f.max_day},
            {"min_day", f.min_day},
            {"extremes_t", f.extremes_t},
            {"extremes_p", f.extremes_p},
            {"flag", f.flag},
            {"reasons", f.reasons},
            {"caveats", f.caveats}};
  j["turning_point"] = f.turning_point ? json(*f.turning_point) : json();
  return j;
}

nlohmann::json CohortToJson(const CohortMagnitude& c) {
  return {{"metric_id", c.metric_id},
          {"window", {c.window.first, c.window.last}},
          {"fresh", DeltaToJson(c.fresh)},
          {"seasoned", DeltaToJson(c.seasoned)},
          {"magnitude", c.magnitude},
          {"std_error", c.std_error},
          {"ci", {c.ci_low, c.ci_high}}};
}

std::string WkTable(const ImpactSeries& series, const TriggerDayFinding& f) {
  std::ostringstream out;
  out << "day\tw_observed\tw_model\tcross_day_pct\tsingle_day_pct\n";
  auto cell = [](double v) { return std::isnan(v) ? std::string("NA") : Num(v); };
  for (int d = 0; d < series.days(); ++d) {
    out << series.first_day + d << '\t' << cell(f.w_observed[d]) << '\t'
        << cell(f.w_model[d]) << '\t'
        << (series.cross_day[d] ? Num(series.cross_day[d]->delta_pct) : "NA")
        << '\t'
        << (series.single_day[d] ? Num(series.single_day[d]->delta_pct) : "NA")
        << '\n';
  }
  return out.str();
}

std::string NoveltyTable(const NoveltyFinding& f) {
  std::ostringstream out;
  out << "t\tobserved_pct\tfitted_pct\n";
  for (int t = 0; t < f.days; ++t) {
    out << t + 1 << '\t'
        << (std::isnan(f.observed[t]) ? std::string("NA") : Num(f.observed[t]))
        << '\t' << Num(f.fitted[t]) << '\n';
  }
  return out.str();
}

}  // namespace expdiag
