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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.h"
#include "expdiag/corpus.h"
#include "expdiag/diagnosis.h"
#include "expdiag/error.h"
#include "expdiag/event_io.h"
#include "expdiag/metacorr.h"
#include "expdiag/simulator.h"
#include "expdiag/stats.h"
#include "expdiag/temporal.h"
#include "expdiag/trigger.h"
#include "json.hpp"

namespace expdiag {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Clock {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string Format(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string Format(const char* fmt, ...) {
  char buf[1024];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

IngestedLog IngestGenerated(const GeneratedLog& g) {
  return Ingest(g.events, g.config);
}

// ---- 1 -------------------------------------------------------------------

Outcome SsrCalibration() {
  const Clock clock;
  const int runs = 2000;
  int reject_05 = 0;
  int reject_001 = 0;
  for (int s = 1; s <= runs; ++s) {
    ScenarioSpec spec = DefaultSpec(ScenarioKind::kClean, 100000 + s);
    spec.n_users = 20000;
    spec.k_days = 1;
    spec.p = 1.0;
    const IngestedLog log = IngestGenerated(Generate(spec).primary);
    const double p = SsrTest(log, log.full_range()).p_value;
    reject_05 += p < 0.05;
    reject_001 += p < 0.001;
  }
  const double r05 = reject_05 / static_cast<double>(runs);
  const double r001 = reject_001 / static_cast<double>(runs);
  const double secs = clock.Seconds();
  return {std::abs(r05 - 0.05) <= 0.015 && std::abs(r001 - 0.001) <= 0.003 &&
              secs < 120.0,
          Format("rejection %.4f at 0.05, %.4f at 0.001 over %d runs, %.1f s",
                 r05, r001, runs, secs)};
}

// ---- 2 -------------------------------------------------------------------

Outcome ChiSquaredSpot() {
  ExperimentConfig c;
  c.experiment_id = "spot";
  c.hash_id = "spot";
  c.variants = {{"control", 0.5}, {"treatment", 0.5}};
  const SsrResult r = SsrFromCounts("spot", c, {5100, 4900}, 0.05);
  // Chi-squared with one degree of freedom is Z^2: P(Z^2 > 4) = erfc(sqrt 2).
  const double oracle = std::erfc(std::sqrt(2.0));
  return {r.stat == 4.0 && std::abs(r.p_value - oracle) <= 0.0005 &&
              std::abs(r.p_value - 0.0455) <= 0.0005,
          Format("stat %.12g, p %.6f, tail oracle %.6f", r.stat, r.p_value,
                 oracle)};
}

// ---- 3 and 4 -------------------------------------------------------------

// Brute-force new/returned counts from raw events.
bool NewReturnedMatchesBruteForce(const GeneratedLog& g, const IngestedLog& log,
                                  std::string* why) {
  std::map<std::string, std::set<int>> days;
  std::map<std::string, int> variant;
  for (const auto& e : g.events) {
    if (const auto* x = std::get_if<ExposureEvent>(&e)) {
      days[x->user_id].insert(x->day);
      variant[x->user_id] = g.config.VariantIndex(x->variant);
    }
  }
  const size_t nv = g.config.variants.size();
  for (int k = 2; k <= log.last_day(); ++k) {
    std::vector<int64_t> n_new(nv, 0);
    std::vector<int64_t> n_ret(nv, 0);
    for (const auto& [user, ds] : days) {
      if (!ds.count(k)) continue;
      if (*ds.begin() == k) {
        ++n_new[variant[user]];
      } else {
        ++n_ret[variant[user]];
      }
    }
    const auto nr = NewReturnedCounts(log, k);
    const auto day = PopulationCounts(log, {k, k}, PopulationMode::kTriggered);
    for (size_t v = 0; v < nv; ++v) {
      if (nr[v].n_new != n_new[v] || nr[v].n_returned != n_ret[v] ||
          nr[v].n_new + nr[v].n_returned != nr[v].n_day ||
          nr[v].n_day != day[v]) {
        *why = Format("day %d variant %zu: %lld+%lld vs %lld+%lld", k, v,
                      static_cast<long long>(nr[v].n_new),
                      static_cast<long long>(nr[v].n_returned),
                      static_cast<long long>(n_new[v]),
                      static_cast<long long>(n_ret[v]));
        return false;
      }
    }
  }
  return true;
}

struct IdentityTally {
  int logs = 0;
  int failures = 0;
  std::string first_failure;
};

Outcome RootCauseAccuracy(IdentityTally& identity) {
  const ScenarioKind kinds[] = {
      ScenarioKind::kCoolOffBug, ScenarioKind::kResidual,
      ScenarioKind::kDynamicTargeting, ScenarioKind::kDependentExperiments};
  bool pass = true;
  std::string detail;
  for (ScenarioKind kind : kinds) {
    int hits = 0;
    int returned_only = 0;
    std::string label;
    for (int s = 1; s <= 100; ++s) {
      ScenarioSpec spec = DefaultSpec(kind, s);
      spec.n_users = 50000;
      spec.k_days = 14;
      const GeneratedExperiment g = Generate(spec);
      label = g.truth.label;
      const IngestedLog log = IngestGenerated(g.primary);
      std::vector<IngestedLog> sibling_logs;
      std::vector<const IngestedLog*> siblings;
      if (g.sibling) {
        sibling_logs.push_back(IngestGenerated(*g.sibling));
        siblings.push_back(&sibling_logs.back());
      }
      DiagnosisOptions options;
      if (g.truth.tracking_metric) {
        options.tracking =
            TrackingPredicate{g.truth.tracking_metric, g.truth.tracking_source};
      }
      const DiagnosisReport r = Diagnose(log, siblings, options);
      hits += r.top_label() == label;
      returned_only += r.new_returned.returned_users.mismatch() &&
                       !r.new_returned.new_users.mismatch();

      std::string why;
      ++identity.logs;
      if (!NewReturnedMatchesBruteForce(g.primary, log, &why)) {
        if (identity.failures++ == 0) identity.first_failure = why;
      }
    }
    pass &= hits >= 90;
    detail += Format("%s %d/100; ", label.c_str(), hits);
    if (kind == ScenarioKind::kResidual) {
      pass &= returned_only >= 90;
      detail += Format("returned-only SSR %d/100; ", returned_only);
    }
  }
  return {pass, detail};
}

Outcome NewReturnedIdentity(IdentityTally& identity) {
  // Clean and novelty logs add the standard generator to the diagnosis ones.
  for (ScenarioKind kind : {ScenarioKind::kClean, ScenarioKind::kNovelty,
                            ScenarioKind::kTriggerDay,
                            ScenarioKind::kBiasedImplementation}) {
    for (int s = 1; s <= 10; ++s) {
      ScenarioSpec spec = DefaultSpec(kind, 500 + s);
      spec.n_users = 10000;
      const GeneratedExperiment g = Generate(spec);
      const IngestedLog log = IngestGenerated(g.primary);
      std::string why;
      ++identity.logs;
      if (!NewReturnedMatchesBruteForce(g.primary, log, &why)) {
        if (identity.failures++ == 0) identity.first_failure = why;
      }
    }
  }
  return {identity.failures == 0,
          Format("%d logs, %d mismatches%s%s", identity.logs, identity.failures,
                 identity.failures ? ": " : "",
                 identity.first_failure.c_str())};
}

// ---- 5 -------------------------------------------------------------------

double Variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= v.size();
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

Outcome FullyCoveredInflation() {
  // Triggered users' values are gamma with CV 2; the rest contribute zero.
  const double shape = 0.25;
  const double mean_c = 1.0;
  const double delta = 0.03;
  const double mean_t = mean_c * (1.0 + delta);
  const double var_c = mean_c * mean_c / shape;
  const double var_t = mean_t * mean_t / shape;
  const int64_t n_all = 40000;  // per arm, all-user population
  const int resamples = 2000;
  bool pass = true;
  std::string detail;
  std::mt19937_64 rng(20260101);
  for (double k : {1.5, 2.0, 4.0}) {
    std::vector<double> d_all;
    std::vector<double> d_trig;
    std::binomial_distribution<int64_t> triggered(n_all, 1.0 / k);
    std::gamma_distribution<double> gc(shape, mean_c / shape);
    std::gamma_distribution<double> gt(shape, mean_t / shape);
    for (int i = 0; i < resamples; ++i) {
      const int64_t m_c = triggered(rng);
      const int64_t m_t = triggered(rng);
      double s_c = 0.0;
      double s_t = 0.0;
      for (int64_t j = 0; j < m_c; ++j) s_c += gc(rng);
      for (int64_t j = 0; j < m_t; ++j) s_t += gt(rng);
      d_trig.push_back((s_t / m_t) / (s_c / m_c) - 1.0);
      d_all.push_back((s_t / n_all) / (s_c / n_all) - 1.0);
    }
    const double mc = Variance(d_all) / Variance(d_trig);
    const double closed =
        VarianceInflationFully(k, 1.0, delta, mean_t, mean_c, var_t, var_c);
    const bool ok = std::abs(closed / mc - 1.0) <= 0.05 && closed >= 1.0 &&
                    mc >= 1.0;
    pass &= ok;
    detail += Format("k=%.1f closed %.4f mc %.4f; ", k, closed, mc);
  }
  // The ratio never drops below one over a parameter grid.
  int below = 0;
  for (double k : {1.0, 1.01, 1.5, 3.0, 10.0, 100.0}) {
    for (double r : {0.25, 1.0, 4.0}) {
      for (double d : {-0.5, 0.0, 0.2}) {
        for (double cv : {0.1, 1.0, 10.0}) {
          below += VarianceInflationFully(k, r, d, 1.0 + d, 1.0,
                                          cv * cv * (1 + d) * (1 + d),
                                          cv * cv) < 1.0;
        }
      }
    }
  }
  pass &= below == 0;
  detail += Format("grid points below one: %d", below);
  return {pass, detail};
}

// ---- 6 -------------------------------------------------------------------

Outcome PartialTRatio() {
  int le_one = 0;
  int within_bound = 0;
  double max_delta = 0.0;
  const int runs = 100;
  for (int s = 1; s <= runs; ++s) {
    ScenarioSpec spec = DefaultSpec(ScenarioKind::kClean, 600 + s).Resolved();
    spec.n_users = 200000;
    spec.k_days = 7;
    spec.activity_cv = 0.0;
    for (auto& m : spec.metrics) {
      if (m.metric_id == "page_views") {
        m.in_lift = 0.1;
        m.off_lift = 0.0;
      }
    }
    const IngestedLog log = IngestGenerated(Generate(spec).primary);
    const int metric = log.MetricIndex("page_views");
    const ArmPair arms = ResolveArms(log.config());
    const auto trig = BuildMetricSummaries(log, log.full_range(),
                                           PopulationMode::kTriggered, metric);
    const auto all = BuildMetricSummaries(log, log.full_range(),
                                          PopulationMode::kAllUser, metric);
    const DeltaEstimate t = DeltaPercent(trig[arms.treatment], trig[arms.control]);
    const DeltaEstimate tp = DeltaPercent(all[arms.treatment], all[arms.control]);
    max_delta = std::max(max_delta, std::abs(t.delta_pct));
    const double ratio = tp.t_stat / t.t_stat;
    const double bound =
        TRatioBoundPartial(trig[arms.control].n, trig[arms.control].variance(),
                           all[arms.control].n, all[arms.control].variance());
    le_one += ratio <= 1.0;
    within_bound += ratio <= bound * 1.05;
  }
  return {le_one == runs && within_bound >= 95 && max_delta <= 0.05,
          Format("t'/t <= 1 in %d/%d, within 1.05 x bound in %d/%d, "
                 "max |delta%%| %.4f",
                 le_one, runs, within_bound, runs, max_delta)};
}

// ---- 7 -------------------------------------------------------------------

Outcome WkFidelity() {
  ScenarioSpec spec = DefaultSpec(ScenarioKind::kClean, 7);
  spec.n_users = 100000;
  spec.k_days = 14;
  spec.p = 0.2;
  const IngestedLog log = IngestGenerated(Generate(spec).primary);
  const auto series = BuildImpactSeries(log, "page_views");
  const auto f = DetectTriggerDay(
      series, DecomposeInOff(log, "page_views", log.full_range()));
  double worst = 0.0;
  for (int k = 1; k <= f.k; ++k) {
    worst = std::max(worst, std::abs(f.w_observed[k - 1] - WkModel(0.2, 2.0, k)));
  }
  const bool exact = WkLimit(0.2, 2.0) == 1.0 / 3.0;
  return {f.k == 14 && worst <= 0.02 && exact,
          Format("max |w_k - model| %.4f over %d days; limit %.17g", worst, f.k,
                 WkLimit(0.2, 2.0))};
}

// ---- 8 -------------------------------------------------------------------

Outcome TriggerDayDetector() {
  int flagged = 0;
  int within = 0;
  double mean_projected = 0.0;
  // One 60-day run has a cross-day sd near 0.5pp, so average ten.
  double long_run = 0.0;
  for (int s = 0; s < 10; ++s) {
    ScenarioSpec long_spec = DefaultSpec(ScenarioKind::kTriggerDay, 9000 + s);
    long_spec.n_users = 50000;
    long_spec.k_days = 60;
    const IngestedLog long_log = IngestGenerated(Generate(long_spec).primary);
    long_run +=
        DecomposeInOff(long_log, "page_views", long_log.full_range()).DeltaX() / 10.0;
  }
  for (int s = 1; s <= 100; ++s) {
    ScenarioSpec spec = DefaultSpec(ScenarioKind::kTriggerDay, s);
    spec.n_users = 50000;
    const IngestedLog log = IngestGenerated(Generate(spec).primary);
    const auto f = DetectTriggerDay(
        BuildImpactSeries(log, "page_views"),
        DecomposeInOff(log, "page_views", log.full_range()));
    flagged += f.flag;
    within += std::abs(f.projected_impact - long_run) <= 0.015;
    mean_projected += f.projected_impact / 100.0;
  }
  int false_pos = 0;
  for (int s = 1; s <= 200; ++s) {
    ScenarioSpec spec = DefaultSpec(ScenarioKind::kClean, 1000 + s);
    spec.n_users = 50000;
    const IngestedLog log = IngestGenerated(Generate(spec).primary);
    const auto f = DetectTriggerDay(
        BuildImpactSeries(log, "page_views"),
        DecomposeInOff(log, "page_views", log.full_range()));
    false_pos += f.flag;
  }
  return {flagged >= 90 && false_pos <= 4 &&
              std::abs(mean_projected - long_run) <= 0.015 && within >= 90,
          Format("flagged %d/100, false positives %d/200, projected %.4f "
                 "(within 1.5pp in %d/100) vs long-run %.4f",
                 flagged, false_pos, mean_projected, within, long_run)};
}

// ---- 9 -------------------------------------------------------------------

Outcome NoveltyDetector() {
  struct Case {
    const char* name;
    std::optional<NoveltySchedule> schedule;
    bool weekend = false;
    int seeds = 100;
  };
  const Case cases[] = {
      {"slow", std::nullopt},
      {"elbow", NoveltySchedule{0.02, 0.08, 2.0}},
      {"stationary", NoveltySchedule{0.05, 0.0, 0.35}},
      {"weekend", NoveltySchedule{0.02, 0.0, 0.35}, true, 20},
  };
  bool pass = true;
  std::string detail;
  for (const Case& c : cases) {
    int flagged = 0;
    int flagged_with_caveat = 0;
    for (int s = 1; s <= c.seeds; ++s) {
      ScenarioSpec spec = DefaultSpec(ScenarioKind::kNovelty, s);
      spec.n_users = 40000;
      if (c.schedule) spec.novelty = c.schedule;
      if (c.weekend) {
        spec.start_weekday = "sat";
        spec.weekday_lift = {{"sat", 0.08}, {"sun", 0.04}};
      }
      const IngestedLog log = IngestGenerated(Generate(spec).primary);
      const auto f = DetectNovelty(BuildImpactSeries(log, "widget_clicks"));
      flagged += f.flag;
      flagged_with_caveat += f.flag && !f.caveats.empty();
    }
    if (std::string(c.name) == "stationary") {
      pass &= flagged <= 5;
    } else if (c.weekend) {
      pass &= flagged_with_caveat == flagged && flagged * 10 >= c.seeds * 9;
    } else {
      pass &= flagged >= 90;
    }
    detail += Format("%s %d/%d", c.name, flagged, c.seeds);
    if (c.weekend) detail += Format(" (with caveat %d)", flagged_with_caveat);
    detail += "; ";
  }
  return {pass, detail};
}

// ---- 10 ------------------------------------------------------------------

Outcome MetaAnalysis() {
  bool pass = true;
  const double null0 = NullCoSignificanceProportion(0.0, 0.05, 200000, 1);
  pass &= std::abs(null0 - 0.05) <= 0.01;
  double prev = 0.0;
  bool monotone = true;
  for (double rho : {0.0, 0.2, 0.4, 0.6, 0.8, 0.95, 1.0}) {
    const double v = NullCoSignificanceProportion(rho, 0.05, 200000, 1);
    monotone &= v >= prev;
    prev = v;
  }
  pass &= monotone;

  CorpusSpec spec;
  spec.m = 200;
  spec.seed = 21;
  const Corpus corpus = GenerateCorpus(spec);
  double beta1 = std::nan("");
  try {
    beta1 = FitDeltaRelation(BuildHistory(corpus.store), spec.metric_x,
                             spec.metric_y)
                .beta1;
  } catch (const Error&) {
  }
  pass &= std::abs(beta1 - 0.5) <= 0.1;

  int refused = 0;
  for (int s = 1; s <= 100; ++s) {
    CorpusSpec null_spec = spec;
    null_spec.pi1_x = 0.0;
    null_spec.pi1_y_alone = 0.0;
    null_spec.seed = 3000 + s;
    const Corpus null_corpus = GenerateCorpus(null_spec);
    try {
      FitDeltaRelation(BuildHistory(null_corpus.store), spec.metric_x,
                       spec.metric_y);
    } catch (const Error& e) {
      refused += e.code() == ErrorCode::kInsufficientData &&
                 std::string(e.what()).find("insufficient discoveries") !=
                     std::string::npos;
    }
  }
  pass &= refused >= 95;
  return {pass, Format("null co-significance %.4f, monotone %s, beta1 %.3f, "
                       "null corpora refused %d/100",
                       null0, monotone ? "yes" : "no", beta1, refused)};
}

// ---- 11 ------------------------------------------------------------------

Outcome EmRecovery() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ne(1000.0, 20000.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  const double pi1 = 0.3;
  const double v = 0.1;
  std::vector<NormalizedEffect> records;
  for (int i = 0; i < 5000; ++i) {
    const double n_e = ne(rng);
    const double sd = std::sqrt(1.0 / n_e + (u(rng) < pi1 ? v * v : 0.0));
    records.push_back({sd * z(rng), n_e});
  }
  const EmFit fit = FitTwoGroupEm(records);
  bool nondecreasing = true;
  for (size_t i = 1; i < fit.log_likelihood.size(); ++i) {
    nondecreasing &= fit.log_likelihood[i] >= fit.log_likelihood[i - 1] -
                                                  1e-9 * std::abs(fit.log_likelihood[i - 1]);
  }
  const double v_err = std::abs(fit.prior.v_sq / (v * v) - 1.0);
  return {std::abs(fit.prior.pi1 - pi1) <= 0.05 && v_err <= 0.2 && nondecreasing,
          Format("pi1 %.4f, V^2 %.5f (%.1f%% off), %d iterations, "
                 "log-likelihood %s",
                 fit.prior.pi1, fit.prior.v_sq, 100 * v_err, fit.iterations,
                 nondecreasing ? "non-decreasing" : "DECREASED")};
}

// ---- 12 ------------------------------------------------------------------

Outcome EarlyIndicatorQuality() {
  const Clock clock;
  CorpusSpec train_spec;
  train_spec.m = 400;
  train_spec.seed = 11;
  const Corpus train = GenerateCorpus(train_spec);
  const History history = BuildHistory(train.store);
  const auto& x = train_spec.metric_x;
  const auto& y = train_spec.metric_y;
  const TwoGroupPrior px = FitMetricPrior(history, x).prior;
  const TwoGroupPrior py = FitMetricPrior(history, y).prior;
  const Conditionals cond =
      EstimateConditionals(history, x, y, train.rho_observed);

  int64_t tp = 0;
  int64_t flagged = 0;
  int64_t positives = 0;
  for (int s = 0; s < 5; ++s) {
    CorpusSpec eval_spec = train_spec;
    eval_spec.seed = 1000 + s;
    const Corpus eval = GenerateCorpus(eval_spec);
    for (const auto& score :
         ScoreEarlyIndicators(eval.store, x, y, 7, px, py, cond, 0.6)) {
      const auto final_rec = RecordAt(eval.store, score.key, {1, 21});
      const bool eventual = final_rec.Find(y)->significant();
      positives += eventual;
      flagged += score.result.flag;
      tp += eventual && score.result.flag;
    }
  }
  const double precision = flagged ? tp / static_cast<double>(flagged) : 0.0;
  const double recall = positives ? tp / static_cast<double>(positives) : 0.0;

  // Uninformative conditionals give back the single-metric posterior.
  double worst = 0.0;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 0.03);
  for (int i = 0; i < 1000; ++i) {
    EarlyIndicatorInput in;
    in.delta_x = z(rng);
    in.n_e_x = 2000 + 10 * i;
    in.delta_y = z(rng);
    in.n_e_y_pred = 3000 + 7 * i;
    in.prior_x = px;
    in.prior_y = py;
    in.conditionals = Conditionals::Uninformative(py.pi1);
    const double a = EarlyIndicator(in).posterior;
    const double b = SingleMetricPosterior(in.delta_y, in.n_e_y_pred, py);
    worst = std::max(worst, std::abs(a - b));
  }
  const double secs = clock.Seconds();
  return {precision >= 0.8 && recall >= 0.5 && worst <= 1e-12 && secs < 300.0,
          Format("precision %.3f, recall %.3f (%lld flagged, %lld eventual), "
                 "uninformative max diff %.2g, %.1f s",
                 precision, recall, static_cast<long long>(flagged),
                 static_cast<long long>(positives), worst, secs)};
}

// ---- 13 ------------------------------------------------------------------

std::string RunCli(const std::vector<std::string>& args, int* code) {
  std::ostringstream out;
  std::ostringstream err;
  *code = cli::Run(args, out, err);
  return out.str() + "\n--stderr--\n" + err.str();
}

Outcome CliDeterminism() {
  const fs::path root = fs::current_path() / "acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  auto path = [&](const std::string& name) { return (root / name).string(); };
  WriteFile(path("dep.json"),
            R"({"kind": "dependent_experiments", "seed": 3, "n_users": 20000})");
  WriteFile(path("nov.json"),
            R"({"kind": "novelty", "seed": 4, "n_users": 20000})");
  WriteFile(path("corpus.json"), R"({"kind": "corpus", "seed": 5, "m": 60})");

  std::vector<std::vector<std::string>> commands;
  for (const char* name : {"dep", "nov", "corpus"}) {
    for (const char* run : {"1", "2"}) {
      commands.push_back({"simulate", path(std::string(name) + ".json"), "--out",
                          path(std::string(name) + run)});
    }
  }
  const std::string dep = path("dep1");
  const std::string nov = path("nov1");
  commands.push_back({"analyze", dep + "/events.jsonl", "--config",
                      dep + "/config.json"});
  commands.push_back({"diagnose", dep + "/events.jsonl", "--config",
                      dep + "/config.json", "--sibling",
                      dep + "/sibling_events.jsonl", "--sibling-config",
                      dep + "/sibling_config.json"});
  commands.push_back({"temporal", nov + "/events.jsonl", "--config",
                      nov + "/config.json", "--metric", "widget_clicks"});
  commands.push_back({"meta", path("corpus1"), "--pair", "sessions,bookings",
                      "--n-sim", "20000"});

  int checked = 0;
  int differing = 0;
  std::string first_diff;
  for (size_t i = 0; i < commands.size(); ++i) {
    const auto& cmd = commands[i];
    int code_a = 0;
    int code_b = 0;
    const std::string a = RunCli(cmd, &code_a);
    if (cmd[0] == "simulate") {
      // The two output directories are compared file by file below; here the
      // second run must reproduce the first run's stdout except for paths.
      continue;
    }
    const std::string b = RunCli(cmd, &code_b);
    ++checked;
    if (a != b || code_a != code_b || code_a == cli::kExitError) {
      if (differing++ == 0) first_diff = cmd[0] + ": " + a.substr(0, 200);
    }
  }
  for (const char* name : {"dep", "nov", "corpus"}) {
    const fs::path d1 = root / (std::string(name) + "1");
    const fs::path d2 = root / (std::string(name) + "2");
    for (const auto& entry : fs::directory_iterator(d1)) {
      const std::string file = entry.path().filename().string();
      ++checked;
      if (ReadFile(entry.path()) != ReadFile(d2 / file)) {
        if (differing++ == 0) first_diff = std::string(name) + "/" + file;
      }
    }
  }
  // A report written through --out matches stdout byte for byte.
  int code = 0;
  const std::string stdout_report =
      RunCli({"analyze", dep + "/events.jsonl", "--config", dep + "/config.json"},
             &code);
  RunCli({"analyze", dep + "/events.jsonl", "--config", dep + "/config.json",
          "--out", path("analyze.json")},
         &code);
  ++checked;
  if (stdout_report.substr(0, stdout_report.find("\n--stderr--\n")) !=
      ReadFile(path("analyze.json"))) {
    if (differing++ == 0) first_diff = "analyze --out";
  }
  fs::remove_all(root);
  return {differing == 0,
          Format("%d outputs compared, %d differ%s%s", checked, differing,
                 differing ? ": " : "", first_diff.c_str())};
}

}  // namespace
}  // namespace expdiag

int main(int argc, char** argv) {
  using expdiag::Outcome;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  expdiag::IdentityTally identity;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"ssr calibration", expdiag::SsrCalibration},
      {"chi-squared spot value", expdiag::ChiSquaredSpot},
      {"root-cause accuracy", [&] { return expdiag::RootCauseAccuracy(identity); }},
      {"new/returned identity",
       [&] { return expdiag::NewReturnedIdentity(identity); }},
      {"fully-covered variance inflation", expdiag::FullyCoveredInflation},
      {"partially-covered t-ratio", expdiag::PartialTRatio},
      {"w_k model fidelity", expdiag::WkFidelity},
      {"trigger-day detector", expdiag::TriggerDayDetector},
      {"novelty detector", expdiag::NoveltyDetector},
      {"meta-analysis", expdiag::MetaAnalysis},
      {"em recovery", expdiag::EmRecovery},
      {"early indicator", expdiag::EarlyIndicatorQuality},
      {"cli determinism", expdiag::CliDeterminism},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const expdiag::Clock clock;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id,
                criteria[i].first.c_str(), o.detail.c_str(), clock.Seconds());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
