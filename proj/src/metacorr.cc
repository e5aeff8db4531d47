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

#include "expdiag/metacorr.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "expdiag/error.h"
#include "expdiag/trigger.h"

namespace expdiag {

namespace {

// P(H1) from the prior and the two log-likelihoods, in log-odds form so
// that extreme likelihood ratios do not overflow.
double PosteriorFromLogLikelihoods(double prior, double log_l1,
                                   double log_l0) {
  if (prior <= 0.0) return 0.0;
  if (prior >= 1.0) return 1.0;
  const double log_odds =
      std::log(prior) - std::log1p(-prior) + (log_l1 - log_l0);
  if (log_odds >= 0.0) return 1.0 / (1.0 + std::exp(-log_odds));
  const double e = std::exp(log_odds);
  return e / (1.0 + e);
}

void CheckPrior(const TwoGroupPrior& prior, const char* name) {
  if (!(prior.pi1 >= 0.0 && prior.pi1 <= 1.0) || !(prior.v_sq >= 0.0) ||
      !std::isfinite(prior.v_sq)) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("invalid prior for ") + name +
                    ": need pi1 in [0,1] and finite V^2 >= 0");
  }
}

std::pair<std::string, std::string> SplitKey(const std::string& key) {
  const auto at = key.rfind('@');
  if (at == std::string::npos || at == 0) return {key, ""};
  return {key.substr(0, at), key.substr(at + 1)};
}

struct KeyContent {
  std::vector<std::string> variants;
  std::vector<std::string> metrics;
  std::vector<DayRange> ranges;
};

std::pair<std::string, std::string> Arms(const std::vector<std::string>& v) {
  std::string control = v.front();
  if (std::find(v.begin(), v.end(), "control") != v.end()) control = "control";
  for (const auto& label : v) {
    if (label != control) return {label, control};
  }
  return {"", control};
}

template <typename T>
void InsertSorted(std::vector<T>& v, const T& x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) v.insert(it, x);
}

double NeFromCounts(double n_t, double n_c) {
  if (n_t <= 0.0 || n_c <= 0.0) return 0.0;
  return 1.0 / (1.0 / n_t + 1.0 / n_c);
}

}  // namespace

MetricRecord MakeMetricRecord(const RangeSummary& treatment,
                              const RangeSummary& control) {
  if (treatment.n < 2 || control.n < 2) {
    throw Error(ErrorCode::kInsufficientData,
                "need at least two users per arm for " + treatment.metric_id);
  }
  const DeltaEstimate lift = DeltaPercent(treatment, control);
  MetricRecord r;
  const double nt = static_cast<double>(treatment.n);
  const double nc = static_cast<double>(control.n);
  r.delta_pct = lift.delta_pct;
  r.delta_abs = treatment.mean() - control.mean();
  r.n_e = NeFromCounts(nt, nc);
  const double se_sq = treatment.variance() / nt + control.variance() / nc;
  if (!(se_sq > 0.0)) {
    throw Error(ErrorCode::kUndefined,
                "zero variance: normalized effect undefined for " +
                    treatment.metric_id);
  }
  const double se = std::sqrt(se_sq);
  r.sigma = std::sqrt(se_sq * r.n_e);
  r.delta = r.delta_abs / r.sigma;
  r.p_value = TwoSidedNormalP(r.delta_abs / se);
  r.mde_pct = (NormalQuantile(0.975) + NormalQuantile(0.8)) * se /
              std::abs(control.mean());
  return r;
}

const MetricRecord* ExperimentHistoryRecord::Find(
    const std::string& metric) const {
  auto it = metrics.find(metric);
  return it == metrics.end() ? nullptr : &it->second;
}

ExperimentHistoryRecord RecordAt(const SummaryStore& store,
                                 const std::string& key, DayRange range) {
  std::vector<std::string> variants;
  std::vector<std::string> metrics;
  for (const auto& [k, s] : store.summaries()) {
    if (k.experiment_id != key || k.range != range) continue;
    InsertSorted(variants, k.variant);
    InsertSorted(metrics, k.metric_id);
  }
  if (variants.size() < 2) {
    throw Error(ErrorCode::kNotFound,
                "no two-arm summaries for " + key + " " + range.ToString());
  }
  const auto [treatment, control] = Arms(variants);
  ExperimentHistoryRecord rec;
  rec.experiment_id = SplitKey(key).first;
  rec.iteration = key;
  rec.range = range;
  rec.run_days = range.length();
  for (const auto& m : metrics) {
    const RangeSummary* t = store.Find({key, treatment, m, range});
    const RangeSummary* c = store.Find({key, control, m, range});
    if (t == nullptr || c == nullptr) continue;
    try {
      rec.metrics.emplace(m, MakeMetricRecord(*t, *c));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInsufficientData &&
          e.code() != ErrorCode::kUndefined) {
        throw;
      }
    }
  }
  return rec;
}

History BuildHistory(const SummaryStore& store, int min_days) {
  // experiment -> key -> content
  std::map<std::string, std::map<std::string, KeyContent>> groups;
  for (const auto& [k, s] : store.summaries()) {
    auto& content = groups[SplitKey(k.experiment_id).first][k.experiment_id];
    InsertSorted(content.variants, k.variant);
    InsertSorted(content.metrics, k.metric_id);
    InsertSorted(content.ranges, k.range);
  }
  History history;
  for (const auto& [experiment, keys] : groups) {
    std::string best_key;
    DayRange best_range;
    double best_ne = -1.0;
    for (const auto& [key, content] : keys) {
      if (content.variants.size() < 2) continue;
      const auto [treatment, control] = Arms(content.variants);
      const int first = content.ranges.front().first;
      std::optional<DayRange> longest;
      for (const DayRange& r : content.ranges) {
        if (r.first != first) continue;
        bool complete = false;
        for (const auto& m : content.metrics) {
          if (store.Find({key, treatment, m, r}) &&
              store.Find({key, control, m, r})) {
            complete = true;
            break;
          }
        }
        if (complete && (!longest || r.last > longest->last)) longest = r;
      }
      if (!longest) continue;
      double n_t = 0.0;
      double n_c = 0.0;
      auto ct = store.FindUserCount({key, treatment, *longest});
      auto cc = store.FindUserCount({key, control, *longest});
      if (ct && cc) {
        n_t = static_cast<double>(*ct);
        n_c = static_cast<double>(*cc);
      } else {
        for (const auto& m : content.metrics) {
          const RangeSummary* t = store.Find({key, treatment, m, *longest});
          const RangeSummary* c = store.Find({key, control, m, *longest});
          if (t && c) {
            n_t = static_cast<double>(t->n);
            n_c = static_cast<double>(c->n);
            break;
          }
        }
      }
      const double ne = NeFromCounts(n_t, n_c);
      if (ne > best_ne) {
        best_ne = ne;
        best_key = key;
        best_range = *longest;
      }
    }
    if (best_key.empty()) {
      history.excluded.push_back({experiment, "no two-arm summaries"});
      continue;
    }
    if (best_range.length() < min_days) {
      history.excluded.push_back(
          {experiment, "ran " + std::to_string(best_range.length()) +
                           " days, fewer than " + std::to_string(min_days)});
      continue;
    }
    auto rec = RecordAt(store, best_key, best_range);
    if (rec.metrics.empty()) {
      history.excluded.push_back({experiment, "no metric with a defined lift"});
      continue;
    }
    history.records.push_back(std::move(rec));
  }
  return history;
}

ComovementResult Comovement(const History& history, const std::string& x,
                            const std::string& y, double rho,
                            const ComovementOptions& options) {
  if (!(rho >= -1.0 && rho <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "rho must be in [-1, 1]");
  }
  ComovementResult r;
  r.x = x;
  r.y = y;
  r.rho = rho;
  r.alpha = options.alpha;
  for (const auto& rec : history.records) {
    const MetricRecord* mx = rec.Find(x);
    const MetricRecord* my = rec.Find(y);
    if (mx == nullptr || my == nullptr || !my->significant(options.alpha)) {
      continue;
    }
    ++r.conditioning;
    if (mx->significant(options.alpha)) ++r.co_significant;
  }
  if (r.conditioning < options.min_conditioning) {
    throw Error(ErrorCode::kInsufficientData,
                "insufficient history: " + std::to_string(r.conditioning) +
                    " records with " + y + " significant, need " +
                    std::to_string(options.min_conditioning));
  }
  r.expected = NullCoSignificanceProportion(rho, options.alpha, options.n_sim,
                                            options.seed);
  const double m = static_cast<double>(r.conditioning);
  r.observed = static_cast<double>(r.co_significant) / m;
  const double e = r.expected;
  if (e <= 0.0 || e >= 1.0) {
    if (r.observed == e) {
      r.stat = 0.0;
      r.p_value = 1.0;
    } else {
      r.stat = std::numeric_limits<double>::infinity();
      r.p_value = r.observed > e ? 0.0 : 1.0;
    }
  } else {
    const double diff = r.observed * m - e * m;
    r.stat = diff * diff / (m * e * (1.0 - e));
    const double tail = 0.5 * ChiSquaredSurvival(r.stat, 1.0);
    r.p_value = r.observed > e ? tail : 1.0 - tail;
  }
  r.elevated = r.p_value < options.alpha;
  r.score = r.stat;
  return r;
}

DeltaRelation FitDeltaRelation(const History& history, const std::string& x,
                               const std::string& y,
                               const DeltaRelationOptions& options) {
  std::vector<const ExperimentHistoryRecord*> recs;
  std::vector<double> p;
  for (const auto& rec : history.records) {
    const MetricRecord* mx = rec.Find(x);
    if (mx == nullptr || rec.Find(y) == nullptr) continue;
    recs.push_back(&rec);
    p.push_back(mx->p_value);
  }
  const auto selected = BenjaminiHochberg(p, options.q);
  DeltaRelation out;
  out.x = x;
  out.y = y;
  out.discoveries = static_cast<int64_t>(selected.size());
  if (out.discoveries < options.min_discoveries) {
    throw Error(ErrorCode::kInsufficientData,
                "insufficient discoveries: " +
                    std::to_string(out.discoveries) + " of " +
                    std::to_string(recs.size()) + " experiments moved " + x +
                    ", need " + std::to_string(options.min_discoveries));
  }
  auto fit = [&](const std::vector<size_t>& rows) {
    const int n = static_cast<int>(rows.size());
    Eigen::MatrixXd a(n, 2);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) {
      a(i, 0) = 1.0;
      a(i, 1) = recs[rows[i]]->Find(x)->delta_pct;
      b(i) = recs[rows[i]]->Find(y)->delta_pct;
    }
    return Ols(a, b, {"intercept", x});
  };
  std::vector<size_t> rows(selected.begin(), selected.end());
  OlsFit result = fit(rows);
  const Eigen::VectorXd student = result.ExternallyStudentized();
  std::vector<size_t> kept;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (std::abs(student(static_cast<Eigen::Index>(i))) >
        options.outlier_threshold) {
      out.outliers.push_back(recs[rows[i]]->experiment_id);
    } else {
      kept.push_back(rows[i]);
    }
  }
  if (!out.outliers.empty() && kept.size() >= 3) {
    result = fit(kept);
    rows = kept;
  } else {
    out.outliers.clear();
  }
  out.beta0 = result.coefficients(0);
  out.beta1 = result.coefficients(1);
  out.beta1_se = result.std_errors(1);
  out.r_squared = result.r_squared;
  for (size_t i : rows) out.points_used.push_back(recs[i]->experiment_id);
  return out;
}

Conditionals Conditionals::Uninformative(double pi1_y) {
  Conditionals c;
  c.p[0][1] = c.p[1][1] = pi1_y;
  c.p[0][0] = c.p[1][0] = 1.0 - pi1_y;
  return c;
}

void Conditionals::Validate() const {
  for (int hx = 0; hx < 2; ++hx) {
    const double a = p[hx][0];
    const double b = p[hx][1];
    if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0) ||
        std::abs(a + b - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidArgument,
                  "conditionals P(H^Y | H^X) must be stochastic rows");
    }
  }
}

Conditionals EstimateConditionals(const History& history, const std::string& x,
                                  const std::string& y, double rho,
                                  const ComovementOptions& options) {
  int64_t sig_x = 0;
  int64_t sig_xy = 0;
  int64_t quiet_x = 0;
  int64_t quiet_x_sig_y = 0;
  for (const auto& rec : history.records) {
    const MetricRecord* mx = rec.Find(x);
    const MetricRecord* my = rec.Find(y);
    if (mx == nullptr || my == nullptr) continue;
    if (mx->significant(options.alpha)) {
      ++sig_x;
      if (my->significant(options.alpha)) ++sig_xy;
    } else {
      ++quiet_x;
      if (my->significant(options.alpha)) ++quiet_x_sig_y;
    }
  }
  if (sig_x == 0 || quiet_x == 0) {
    throw Error(ErrorCode::kInsufficientData,
                "insufficient history: need records with " + x +
                    " significant and not significant");
  }
  const double e = NullCoSignificanceProportion(rho, options.alpha,
                                                options.n_sim, options.seed);
  Conditionals c;
  c.p[1][1] = std::max(0.0, static_cast<double>(sig_xy) / sig_x - e);
  c.p[0][1] =
      std::max(0.0, static_cast<double>(quiet_x_sig_y) / quiet_x - options.alpha);
  c.p[1][0] = 1.0 - c.p[1][1];
  c.p[0][0] = 1.0 - c.p[0][1];
  return c;
}

EmFit FitMetricPrior(const History& history, const std::string& metric,
                     const EmOptions& options) {
  std::vector<NormalizedEffect> effects;
  for (const auto& rec : history.records) {
    if (const MetricRecord* m = rec.Find(metric)) effects.push_back(m->effect());
  }
  return FitTwoGroupEm(effects, options);
}

double SingleMetricPosterior(double delta, double n_e,
                             const TwoGroupPrior& prior) {
  if (!(n_e > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "N_e must be positive");
  }
  CheckPrior(prior, "metric");
  const double null_var = 1.0 / n_e;
  return PosteriorFromLogLikelihoods(
      prior.pi1, LogNormalDensity(delta, null_var + prior.v_sq),
      LogNormalDensity(delta, null_var));
}

EarlyIndicatorResult EarlyIndicator(const EarlyIndicatorInput& input) {
  if (!(input.n_e_x > 0.0) || !(input.n_e_y_pred > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "N_e must be positive");
  }
  input.conditionals.Validate();
  CheckPrior(input.prior_x, "X");
  CheckPrior(input.prior_y, "Y");
  EarlyIndicatorResult r;
  r.input = input;
  r.posterior_x =
      SingleMetricPosterior(input.delta_x, input.n_e_x, input.prior_x);
  const double c1 = input.conditionals.y1_given_x1();
  const double c0 = input.conditionals.y1_given_x0();
  r.prior_y = std::clamp(c0 + (c1 - c0) * r.posterior_x, 0.0, 1.0);
  const double null_var = 1.0 / input.n_e_y_pred;
  const double l1 = LogNormalDensity(input.delta_y, null_var + input.prior_y.v_sq);
  const double l0 = LogNormalDensity(input.delta_y, null_var);
  r.likelihood_ratio = std::exp(l1 - l0);
  r.posterior = PosteriorFromLogLikelihoods(r.prior_y, l1, l0);
  r.flag = r.posterior > input.threshold;
  return r;
}

double ProjectNe(std::span<const double> n_e, int target_day) {
  if (target_day < 1) {
    throw Error(ErrorCode::kInvalidArgument, "target day must be >= 1");
  }
  std::vector<double> lx;
  std::vector<double> ly;
  for (size_t i = 0; i < n_e.size(); ++i) {
    if (n_e[i] > 0.0 && std::isfinite(n_e[i])) {
      lx.push_back(std::log(static_cast<double>(i + 1)));
      ly.push_back(std::log(n_e[i]));
    }
  }
  if (lx.size() < 3) {
    throw Error(ErrorCode::kInsufficientData,
                "N_e projection needs at least 3 days with users");
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0.0;
  double my = 0.0;
  for (size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  const double b = std::clamp(sxx > 0.0 ? sxy / sxx : 0.0, 0.0, 1.0);
  const double a = my - b * mx;
  return std::exp(a + b * std::log(static_cast<double>(target_day)));
}

std::vector<EarlyScore> ScoreEarlyIndicators(
    const SummaryStore& store, const std::string& x, const std::string& y,
    int day, const TwoGroupPrior& prior_x, const TwoGroupPrior& prior_y,
    const Conditionals& conditionals, double threshold, int target_day) {
  if (day < 3) {
    throw Error(ErrorCode::kInvalidArgument, "early day must be >= 3");
  }
  const DayRange range{1, day};
  std::vector<EarlyScore> scores;
  for (const std::string& key : store.ExperimentIds()) {
    std::vector<std::string> variants;
    for (auto it = store.summaries().lower_bound({key, "", "", {}});
         it != store.summaries().end() && it->first.experiment_id == key;
         ++it) {
      InsertSorted(variants, it->first.variant);
    }
    if (variants.size() < 2) continue;
    const auto [treatment, control] = Arms(variants);
    std::vector<double> n_e;
    for (int d = 1; d <= day; ++d) {
      auto nt = store.FindUserCount({key, treatment, {1, d}});
      auto nc = store.FindUserCount({key, control, {1, d}});
      if (!nt || !nc) break;
      n_e.push_back(NeFromCounts(static_cast<double>(*nt),
                                 static_cast<double>(*nc)));
    }
    if (static_cast<int>(n_e.size()) != day) continue;
    const ExperimentHistoryRecord rec = RecordAt(store, key, range);
    const MetricRecord* rx = rec.Find(x);
    const MetricRecord* ry = rec.Find(y);
    if (rx == nullptr || ry == nullptr) continue;
    double pred = 0.0;
    try {
      pred = ProjectNe(n_e, target_day);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInsufficientData) throw;
      continue;
    }
    EarlyScore score;
    score.key = key;
    score.n_e_pred = pred;
    score.result = EarlyIndicator({rx->delta, rx->n_e, ry->delta,
                                   std::max(pred, ry->n_e), prior_x, prior_y,
                                   conditionals, threshold});
    scores.push_back(std::move(score));
  }
  return scores;
}

double UserLevelCorrelation(const IngestedLog& log, std::string_view x,
                            std::string_view y, DayRange range) {
  const int mx = log.MetricIndex(x);
  const int my = log.MetricIndex(y);
  auto total = [&](int metric, UserIndex u) {
    double s = 0.0;
    for (const auto& c : log.metric_cells(metric, u)) {
      if (range.Contains(c.day)) s += c.value;
    }
    return s;
  };
  double n = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < log.user_count(); ++i) {
    const auto u = static_cast<UserIndex>(i);
    if (!log.TriggeredIn(u, range)) continue;
    const double a = total(mx, u);
    const double b = total(my, u);
    n += 1;
    sx += a;
    sy += b;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  if (n < 3) {
    throw Error(ErrorCode::kInsufficientData,
                "correlation needs at least 3 triggered users");
  }
  const double vx = sxx - sx * sx / n;
  const double vy = syy - sy * sy / n;
  if (!(vx > 0.0) || !(vy > 0.0)) {
    throw Error(ErrorCode::kUndefined, "correlation undefined: zero variance");
  }
  return std::clamp((sxy - sx * sy / n) / std::sqrt(vx * vy), -1.0, 1.0);
}

nlohmann::json HistoryToJson(const History& history) {
  using nlohmann::json;
  json records = json::array();
  for (const auto& rec : history.records) {
    json metrics = json::object();
    for (const auto& [name, m] : rec.metrics) {
      metrics[name] = {{"delta_pct", m.delta_pct}, {"delta", m.delta},
                       {"n_e", m.n_e},             {"p_value", m.p_value},
                       {"mde_pct", m.mde_pct}};
    }
    records.push_back({{"experiment_id", rec.experiment_id},
                       {"iteration", rec.iteration},
                       {"range", {rec.range.first, rec.range.last}},
                       {"run_days", rec.run_days},
                       {"metrics", metrics}});
  }
  json excluded = json::array();
  for (const auto& e : history.excluded) {
    excluded.push_back({{"experiment_id", e.experiment_id},
                        {"reason", e.reason}});
  }
  return {{"records", records}, {"excluded", excluded}};
}

nlohmann::json ComovementToJson(const ComovementResult& r) {
  return {{"x", r.x},
          {"y", r.y},
          {"rho", r.rho},
          {"alpha", r.alpha},
          {"conditioning", r.conditioning},
          {"co_significant", r.co_significant},
          {"expected", r.expected},
          {"observed", r.observed},
          {"stat", std::isfinite(r.stat) ? nlohmann::json(r.stat)
                                         : nlohmann::json("inf")},
          {"p_value", r.p_value},
          {"elevated", r.elevated},
          {"score", std::isfinite(r.score) ? nlohmann::json(r.score)
                                           : nlohmann::json("inf")}};
}

nlohmann::json DeltaRelationToJson(const DeltaRelation& r) {
  return {{"x", r.x},
          {"y", r.y},
          {"beta0", r.beta0},
          {"beta1", r.beta1},
          {"beta1_se", r.beta1_se},
          {"r_squared", r.r_squared},
          {"discoveries", r.discoveries},
          {"points_used", r.points_used},
          {"outliers", r.outliers}};
}

nlohmann::json EarlyIndicatorToJson(const EarlyIndicatorResult& r) {
  const auto& in = r.input;
  return {{"delta_x", in.delta_x},
          {"n_e_x", in.n_e_x},
          {"delta_y", in.delta_y},
          {"n_e_y_pred", in.n_e_y_pred},
          {"prior_x", {{"pi1", in.prior_x.pi1}, {"v_sq", in.prior_x.v_sq}}},
          {"prior_y", {{"pi1", in.prior_y.pi1}, {"v_sq", in.prior_y.v_sq}}},
          {"conditionals",
           {{"y1_given_x1", in.conditionals.y1_given_x1()},
            {"y1_given_x0", in.conditionals.y1_given_x0()}}},
          {"threshold", in.threshold},
          {"posterior_x", r.posterior_x},
          {"prior_y_given_x", r.prior_y},
          {"likelihood_ratio", r.likelihood_ratio},
          {"posterior", r.posterior},
          {"flag", r.flag}};
}

nlohmann::json EarlyScoreToJson(const EarlyScore& s) {
  nlohmann::json j = EarlyIndicatorToJson(s.result);
  j["key"] = s.key;
  return j;
}

}  // namespace expdiag
