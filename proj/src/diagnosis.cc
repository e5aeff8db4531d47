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

#include "expdiag/diagnosis.h"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "expdiag/error.h"
#include "expdiag/stats.h"

namespace expdiag {

namespace {

constexpr std::string_view kDynamicTargeting = "DynamicTargeting";
constexpr std::string_view kCoolOff = "FeedbackLoop:BiasedImplementation/CoolOff";
constexpr std::string_view kResidual = "FeedbackLoop:Residual/EngagementChange";
constexpr std::string_view kBiasedImplementation =
    "FeedbackLoop:BiasedImplementation";
constexpr std::string_view kDependent = "DependentExperiments";
constexpr std::string_view kUnexplained = "Unexplained";

std::string Describe(const SsrResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s %s (chi2 = %.4g, p = %.3g)",
                r.check.c_str(), std::string(VerdictName(r.verdict)).c_str(),
                r.stat, r.p_value);
  return buf;
}

std::string Join(const std::vector<int64_t>& counts) {
  std::string out;
  for (size_t i = 0; i < counts.size(); ++i) {
    if (i > 0) out += "/";
    out += std::to_string(counts[i]);
  }
  return out;
}

}  // namespace

std::string_view VerdictName(Verdict verdict) {
  switch (verdict) {
    case Verdict::kBalanced:
      return "Balanced";
    case Verdict::kMismatch:
      return "Mismatch";
    case Verdict::kSkipped:
      return "Skipped";
  }
  return "Unknown";
}

SsrResult SsrFromCounts(std::string check, const ExperimentConfig& config,
                        std::vector<int64_t> counts, double alpha,
                        std::string skip_note) {
  SsrResult r;
  r.check = std::move(check);
  r.alpha = alpha;
  r.observed = std::move(counts);
  int64_t total = 0;
  for (int64_t n : r.observed) total += n;
  if (total == 0) {
    r.verdict = Verdict::kSkipped;
    r.note = std::move(skip_note);
    r.expected.assign(r.observed.size(), 0.0);
    return r;
  }
  const auto fractions = config.Fractions();
  const auto chi = ChiSquaredGoodnessOfFit(r.observed, fractions);
  r.expected = chi.expected;
  r.stat = chi.stat;
  r.p_value = chi.p_value;
  r.verdict = r.p_value < alpha ? Verdict::kMismatch : Verdict::kBalanced;
  return r;
}

SsrResult SsrTest(const IngestedLog& log, DayRange range, double alpha) {
  auto counts = PopulationCounts(log, range, PopulationMode::kTriggered);
  int64_t total = 0;
  for (int64_t n : counts) total += n;
  if (total == 0) {
    throw Error(ErrorCode::kInsufficientData,
                "no triggered users in " + range.ToString());
  }
  return SsrFromCounts("primary", log.config(), std::move(counts), alpha);
}

TargetedCheck CheckTargeted(const IngestedLog& log, DayRange range,
                            double alpha) {
  TargetedCheck out;
  if (!log.has_targeting()) {
    out.snapshot.check = "targeted";
    out.snapshot.alpha = alpha;
    out.snapshot.verdict = Verdict::kSkipped;
    out.snapshot.note = "targeting data absent";
    out.snapshot.observed.assign(log.variant_count(), 0);
    out.snapshot.expected.assign(log.variant_count(), 0.0);
    return out;
  }
  std::optional<SsrResult> last;
  for (int d = range.first; d <= range.last; ++d) {
    auto members = log.targeted_on(d);
    if (members.empty()) continue;
    std::vector<int64_t> counts(log.variant_count(), 0);
    for (UserIndex u : members) ++counts[log.variant(u)];
    auto r = SsrFromCounts("targeted", log.config(), std::move(counts), alpha);
    out.by_day.emplace_back(d, r);
    last = r;
  }
  if (last) {
    out.snapshot = *last;
    out.snapshot.note = "targeted population on day " +
                        std::to_string(out.by_day.back().first);
  } else {
    out.snapshot = SsrFromCounts("targeted", log.config(),
                                 std::vector<int64_t>(log.variant_count(), 0),
                                 alpha, "no targeting records in range");
  }
  return out;
}

std::pair<SsrResult, SsrResult> CheckNewReturnedDay(const IngestedLog& log,
                                                    int day, double alpha) {
  const auto counts = NewReturnedCounts(log, day);
  std::vector<int64_t> n_new;
  std::vector<int64_t> n_ret;
  for (const auto& c : counts) {
    n_new.push_back(c.n_new);
    n_ret.push_back(c.n_returned);
  }
  return {SsrFromCounts("new_users", log.config(), n_new, alpha,
                        "no new users on day " + std::to_string(day)),
          SsrFromCounts("returned_users", log.config(), n_ret, alpha,
                        "no returned users on day " + std::to_string(day))};
}

NewReturnedCheck CheckNewReturned(const IngestedLog& log, DayRange range,
                                  double alpha) {
  NewReturnedCheck out;
  const int nv = log.variant_count();
  std::vector<int64_t> n_new(nv, 0);
  std::vector<int64_t> n_ret(nv, 0);
  for (size_t u = 0; u < log.user_count(); ++u) {
    const auto user = static_cast<UserIndex>(u);
    const int first = log.first_trigger_day(user);
    if (first == 0 || first > range.last) continue;
    if (first >= range.first) {
      ++n_new[log.variant(user)];
    } else if (log.TriggeredIn(user, range)) {
      ++n_ret[log.variant(user)];
    }
  }
  out.new_users = SsrFromCounts("new_users", log.config(), n_new, alpha);
  if (range.first <= log.first_day()) {
    out.returned_users = SsrFromCounts(
        "returned_users", log.config(), std::vector<int64_t>(nv, 0), alpha,
        "range starts on the first day; no user can return");
  } else {
    out.returned_users =
        SsrFromCounts("returned_users", log.config(), n_ret, alpha,
                      "no returned users in range");
  }
  for (int d = std::max(range.first, log.first_day() + 1); d <= range.last;
       ++d) {
    NewReturnedDay day;
    day.day = d;
    day.counts = NewReturnedCounts(log, d);
    std::tie(day.new_users, day.returned_users) =
        CheckNewReturnedDay(log, d, alpha);
    if (day.new_users.mismatch() && !out.first_significant_new_day) {
      out.first_significant_new_day = d;
    }
    if (day.returned_users.mismatch() && !out.first_significant_returned_day) {
      out.first_significant_returned_day = d;
    }
    out.series.push_back(std::move(day));
  }
  return out;
}

std::string TrackingPredicate::ToString() const {
  std::string out = metric_id.value_or("*");
  if (source_tag) out += "@" + *source_tag;
  return out;
}

SsrResult CheckIndependentTracking(const IngestedLog& log,
                                   const TrackingPredicate& predicate,
                                   DayRange range, double alpha) {
  const std::string name = "independent_tracking";
  std::optional<int> metric;
  if (predicate.metric_id) {
    metric = log.FindMetric(*predicate.metric_id);
    if (!metric) {
      return SsrFromCounts(name, log.config(),
                           std::vector<int64_t>(log.variant_count(), 0), alpha,
                           "predicate " + predicate.ToString() +
                               " matches no events");
    }
  }
  std::optional<int> source;
  if (predicate.source_tag) {
    const auto& names = log.source_names();
    auto it = std::lower_bound(names.begin(), names.end(), *predicate.source_tag);
    if (it == names.end() || *it != *predicate.source_tag) {
      return SsrFromCounts(name, log.config(),
                           std::vector<int64_t>(log.variant_count(), 0), alpha,
                           "predicate " + predicate.ToString() +
                               " matches no events");
    }
    source = static_cast<int>(it - names.begin());
  }
  std::vector<int64_t> counts(log.variant_count(), 0);
  for (size_t u = 0; u < log.user_count(); ++u) {
    const auto user = static_cast<UserIndex>(u);
    bool match = false;
    if (source) {
      for (const auto& e : log.sourced_events(user)) {
        if (range.Contains(e.day) && e.source == *source &&
            (!metric || e.metric == *metric)) {
          match = true;
          break;
        }
      }
    } else if (metric) {
      for (const auto& c : log.metric_cells(*metric, user)) {
        if (range.Contains(c.day) && c.value != 0.0) {
          match = true;
          break;
        }
      }
    } else {
      for (size_t m = 0; m < log.metric_count() && !match; ++m) {
        for (const auto& c : log.metric_cells(static_cast<int>(m), user)) {
          if (range.Contains(c.day) && c.value != 0.0) {
            match = true;
            break;
          }
        }
      }
    }
    if (match) ++counts[log.variant(user)];
  }
  auto r = SsrFromCounts(name, log.config(), std::move(counts), alpha,
                         "predicate " + predicate.ToString() +
                             " matches no events");
  if (r.verdict != Verdict::kSkipped) r.note = "predicate " + predicate.ToString();
  return r;
}

std::vector<SsrResult> CheckServiceSplit(const IngestedLog& log,
                                         DayRange range, double alpha) {
  const auto& names = log.service_names();
  if (names.empty()) {
    return {SsrFromCounts("service", log.config(),
                          std::vector<int64_t>(log.variant_count(), 0), alpha,
                          "exposures carry no service tags")};
  }
  std::vector<std::vector<int64_t>> counts(
      names.size(), std::vector<int64_t>(log.variant_count(), 0));
  std::vector<char> seen(names.size());
  for (size_t u = 0; u < log.user_count(); ++u) {
    const auto user = static_cast<UserIndex>(u);
    std::fill(seen.begin(), seen.end(), 0);
    for (const auto& e : log.service_exposures(user)) {
      if (range.Contains(e.day)) seen[e.service] = 1;
    }
    for (size_t s = 0; s < names.size(); ++s) {
      if (seen[s]) ++counts[s][log.variant(user)];
    }
  }
  std::vector<SsrResult> out;
  for (size_t s = 0; s < names.size(); ++s) {
    out.push_back(SsrFromCounts("service:" + names[s], log.config(),
                                std::move(counts[s]), alpha,
                                "no exposures via " + names[s] + " in range"));
  }
  return out;
}

OverlapResult CheckSharedHashOverlap(const IngestedLog& primary,
                                     const IngestedLog& sibling,
                                     DayRange range, double alpha) {
  const auto& pc = primary.config();
  const auto& sc = sibling.config();
  if (pc.hash_id != sc.hash_id) {
    throw Error(ErrorCode::kInvalidArgument,
                "overlap check needs a shared hash_id ('" + pc.hash_id +
                    "' vs '" + sc.hash_id + "'); user sets are not comparable");
  }
  if (pc.variants.size() != sc.variants.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "overlap check needs the same variants in both experiments");
  }
  std::vector<int> sibling_to_primary(sc.variants.size());
  for (size_t v = 0; v < sc.variants.size(); ++v) {
    sibling_to_primary[v] = pc.VariantIndex(sc.variants[v].label);
    if (sibling_to_primary[v] < 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "variant '" + sc.variants[v].label +
                      "' missing from the primary experiment");
    }
  }
  OverlapResult out;
  out.sibling_experiment_id = sc.experiment_id;
  const size_t nv = pc.variants.size();
  out.a.assign(nv, 0);
  out.b1.assign(nv, 0);
  out.b2.assign(nv, 0);
  out.a1.assign(nv, 0);
  out.a2.assign(nv, 0);

  auto first_in = [](const IngestedLog& log, UserIndex u, DayRange r) {
    for (int32_t d : log.trigger_days(u)) {
      if (d > r.last) break;
      if (d >= r.first) return d;
    }
    return 0;
  };
  // Both user tables are sorted by id; merge them.
  size_t i = 0;
  size_t j = 0;
  while (i < primary.user_count() || j < sibling.user_count()) {
    int cmp;
    if (i == primary.user_count()) {
      cmp = 1;
    } else if (j == sibling.user_count()) {
      cmp = -1;
    } else {
      cmp = primary.user_id(static_cast<UserIndex>(i))
                .compare(sibling.user_id(static_cast<UserIndex>(j)));
    }
    const auto pu = static_cast<UserIndex>(i);
    const auto su = static_cast<UserIndex>(j);
    const int f1 = cmp <= 0 ? first_in(primary, pu, range) : 0;
    const int f2 = cmp >= 0 ? first_in(sibling, su, range) : 0;
    const int variant = cmp <= 0 ? primary.variant(pu)
                                 : sibling_to_primary[sibling.variant(su)];
    if (cmp == 0 && f1 > 0 && f2 > 0 &&
        sibling_to_primary[sibling.variant(su)] != primary.variant(pu)) {
      throw Error(ErrorCode::kDataIntegrity,
                  "user '" + primary.user_id(pu) +
                      "' has different variants under a shared hash_id");
    }
    if (f1 > 0 && f2 > 0) {
      ++out.a[variant];
      if (f2 < f1) {
        ++out.a2[variant];
      } else {
        ++out.a1[variant];
        if (f1 == f2) ++out.same_day_ties;
      }
    } else if (f1 > 0) {
      ++out.b1[variant];
    } else if (f2 > 0) {
      ++out.b2[variant];
    }
    if (cmp <= 0) ++i;
    if (cmp >= 0) ++j;
  }
  std::vector<int64_t> all(nv);
  for (size_t v = 0; v < nv; ++v) all[v] = out.a[v] + out.b1[v] + out.b2[v];
  const std::string suffix = ":" + sc.experiment_id;
  out.union_ssr = SsrFromCounts("overlap_union" + suffix, pc, all, alpha);
  out.a2_ssr = SsrFromCounts("overlap_a2" + suffix, pc, out.a2, alpha,
                             "no user triggered the sibling first");
  if (out.same_day_ties > 0) {
    out.notes.push_back(
        std::to_string(out.same_day_ties) +
        " users first triggered both experiments on the same day; with day "
        "granularity they are counted in A1, so the A1/A2 split is "
        "ambiguous");
  }
  return out;
}

std::optional<std::string> DiagnosisReport::top_label() const {
  if (hypotheses.empty()) return std::nullopt;
  return hypotheses.front().label;
}

DiagnosisReport Diagnose(const IngestedLog& log,
                         std::span<const IngestedLog* const> siblings,
                         const DiagnosisOptions& options) {
  DiagnosisReport report;
  report.experiment_id = log.config().experiment_id;
  report.range = options.range.value_or(log.counting_range());
  report.alpha = options.alpha;
  const DayRange range = report.range;
  const double alpha = options.alpha;
  report.primary = SsrTest(log, range, alpha);
  report.new_returned = CheckNewReturned(log, range, alpha);
  if (!report.primary.mismatch()) return report;

  report.targeted = CheckTargeted(log, range, alpha);
  if (options.tracking) {
    report.independent_tracking =
        CheckIndependentTracking(log, *options.tracking, range, alpha);
  }
  report.services = CheckServiceSplit(log, range, alpha);
  for (const IngestedLog* sibling : siblings) {
    const DayRange r{range.first, std::min(range.last, sibling->last_day())};
    report.overlaps.push_back(CheckSharedHashOverlap(log, *sibling, r, alpha));
  }

  auto& hyps = report.hypotheses;
  const auto& targeted = report.targeted->snapshot;
  if (targeted.mismatch()) {
    hyps.push_back({std::string(kDynamicTargeting), targeted.p_value,
                    targeted.stat,
                    {Describe(targeted),
                     "targeted population is itself mismatched before "
                     "triggering"}});
  }

  // Code paths whose population is mismatched while another is not.
  std::vector<const SsrResult*> biased_paths;
  bool any_balanced_path = false;
  for (const auto& s : report.services) {
    if (s.verdict == Verdict::kBalanced) any_balanced_path = true;
  }
  for (const auto& s : report.services) {
    if (s.mismatch() && any_balanced_path) biased_paths.push_back(&s);
  }

  const auto& nr = report.new_returned;
  if (nr.new_users.verdict == Verdict::kBalanced &&
      nr.returned_users.mismatch()) {
    std::vector<std::string> evidence = {Describe(nr.new_users),
                                         Describe(nr.returned_users)};
    if (nr.first_significant_returned_day) {
      evidence.push_back("returned users first significant on day " +
                         std::to_string(*nr.first_significant_returned_day));
    }
    for (const auto* s : biased_paths) {
      evidence.push_back("code path isolated: " + Describe(*s));
    }
    const auto* tracking = report.independent_tracking
                               ? &*report.independent_tracking
                               : nullptr;
    auto add = [&](std::string_view label, std::string extra) {
      Hypothesis h{std::string(label), nr.returned_users.p_value,
                   nr.returned_users.stat, evidence};
      h.evidence.push_back(std::move(extra));
      hyps.push_back(std::move(h));
    };
    if (tracking && tracking->verdict == Verdict::kBalanced) {
      add(kCoolOff, Describe(*tracking) +
                        ": users reach the trigger point evenly, so the "
                        "experiment code drops them");
    } else if (tracking && tracking->mismatch()) {
      add(kResidual, Describe(*tracking) +
                         ": users themselves return at different rates");
    } else {
      const std::string why =
          tracking ? Describe(*tracking) + ": cannot separate implementation "
                                           "from engagement"
                   : "independent tracking not run: cannot separate "
                     "implementation from engagement";
      add(kCoolOff, why);
      add(kResidual, why);
    }
    report.remediation.push_back(
        "new users are balanced: rehashing and counting users from the "
        "beginning is expected to give matched samples");
  }

  if (!biased_paths.empty()) {
    const SsrResult* worst = biased_paths.front();
    for (const auto* s : biased_paths) {
      if (s->p_value < worst->p_value) worst = s;
    }
    Hypothesis h{std::string(kBiasedImplementation), worst->p_value,
                 worst->stat, {}};
    for (const auto* s : biased_paths) {
      h.evidence.push_back("code path isolated: " + Describe(*s));
    }
    hyps.push_back(std::move(h));
  }

  for (const auto& o : report.overlaps) {
    if (o.a2_ssr.mismatch()) {
      Hypothesis h{std::string(kDependent), o.a2_ssr.p_value, o.a2_ssr.stat,
                   {Describe(o.a2_ssr), Describe(o.union_ssr),
                    "A/B1/B2 per variant: " + Join(o.a) + ", " + Join(o.b1) +
                        ", " + Join(o.b2)}};
      h.evidence.insert(h.evidence.end(), o.notes.begin(), o.notes.end());
      hyps.push_back(std::move(h));
    } else if (o.a2_ssr.verdict == Verdict::kSkipped &&
               o.union_ssr.verdict == Verdict::kBalanced) {
      hyps.push_back({std::string(kDependent), report.primary.p_value,
                      report.primary.stat,
                      {Describe(o.union_ssr),
                       "de-duplicated union with " + o.sibling_experiment_id +
                           " is balanced while this experiment is not"}});
    }
  }

  if (hyps.empty()) {
    Hypothesis h{std::string(kUnexplained), report.primary.p_value,
                 report.primary.stat, {Describe(report.primary)}};
    h.evidence.push_back("no check isolated the bias");
    hyps.push_back(std::move(h));
  }
  std::stable_sort(hyps.begin(), hyps.end(),
                   [](const Hypothesis& a, const Hypothesis& b) {
                     if (a.p_value != b.p_value) return a.p_value < b.p_value;
                     if (a.stat != b.stat) return a.stat > b.stat;
                     return a.label < b.label;
                   });
  return report;
}

nlohmann::json SsrToJson(const SsrResult& r) {
  nlohmann::json j = {{"check", r.check},
                      {"observed", r.observed},
                      {"expected", r.expected},
                      {"stat", r.stat},
                      {"p_value", r.p_value},
                      {"alpha", r.alpha},
                      {"verdict", VerdictName(r.verdict)}};
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

nlohmann::json DiagnosisToJson(const DiagnosisReport& report) {
  using nlohmann::json;
  json j;
  j["experiment_id"] = report.experiment_id;
  j["range"] = {report.range.first, report.range.last};
  j["alpha"] = report.alpha;
  j["verdict"] = VerdictName(report.primary.verdict);
  j["primary"] = SsrToJson(report.primary);
  json checks = json::object();
  if (report.targeted) {
    checks["targeted"] = SsrToJson(report.targeted->snapshot);
    json by_day = json::array();
    for (const auto& [day, r] : report.targeted->by_day) {
      by_day.push_back({{"day", day}, {"result", SsrToJson(r)}});
    }
    checks["targeted_by_day"] = by_day;
  }
  const auto& nr = report.new_returned;
  checks["new_users"] = SsrToJson(nr.new_users);
  checks["returned_users"] = SsrToJson(nr.returned_users);
  if (nr.first_significant_new_day) {
    checks["first_significant_new_day"] = *nr.first_significant_new_day;
  }
  if (nr.first_significant_returned_day) {
    checks["first_significant_returned_day"] =
        *nr.first_significant_returned_day;
  }
  if (report.independent_tracking) {
    checks["independent_tracking"] = SsrToJson(*report.independent_tracking);
  }
  json services = json::array();
  for (const auto& s : report.services) services.push_back(SsrToJson(s));
  checks["services"] = services;
  json overlaps = json::array();
  for (const auto& o : report.overlaps) {
    overlaps.push_back({{"sibling", o.sibling_experiment_id},
                        {"a", o.a},
                        {"b1", o.b1},
                        {"b2", o.b2},
                        {"a1", o.a1},
                        {"a2", o.a2},
                        {"same_day_ties", o.same_day_ties},
                        {"union", SsrToJson(o.union_ssr)},
                        {"a2_test", SsrToJson(o.a2_ssr)},
                        {"notes", o.notes}});
  }
  checks["overlap"] = overlaps;
  j["checks"] = checks;
  json hyps = json::array();
  for (const auto& h : report.hypotheses) {
    hyps.push_back({{"label", h.label},
                    {"p_value", h.p_value},
                    {"stat", h.stat},
                    {"evidence", h.evidence}});
  }
  j["hypotheses"] = hyps;
  j["remediation"] = report.remediation;
  return j;
}

std::string NewReturnedTable(const DiagnosisReport& report,
                             const ExperimentConfig& config) {
  const ArmPair arms = ResolveArms(config);
  std::ostringstream out;
  out << "day";
  for (const auto& v : config.variants) {
    out << "\tnew_" << v.label << "\treturned_" << v.label;
  }
  out << "\tnew_ratio\treturned_ratio\tnew_p\treturned_p\n";
  for (const auto& d : report.new_returned.series) {
    out << d.day;
    for (const auto& c : d.counts) out << '\t' << c.n_new << '\t' << c.n_returned;
    auto ratio = [&](int64_t t, int64_t c) {
      char buf[32];
      if (c == 0) return std::string("NA");
      std::snprintf(buf, sizeof(buf), "%.6f",
                    static_cast<double>(t) / static_cast<double>(c));
      return std::string(buf);
    };
    const auto& t = d.counts[arms.treatment];
    const auto& c = d.counts[arms.control];
    char p_new[32];
    char p_ret[32];
    std::snprintf(p_new, sizeof(p_new), "%.6g", d.new_users.p_value);
    std::snprintf(p_ret, sizeof(p_ret), "%.6g", d.returned_users.p_value);
    out << '\t' << ratio(t.n_new, c.n_new) << '\t'
        << ratio(t.n_returned, c.n_returned) << '\t' << p_new << '\t' << p_ret
        << '\n';
  }
  return out.str();
}

}  // namespace expdiag
