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

#include "expdiag/simulator.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "expdiag/error.h"
#include "expdiag/rng.h"

namespace expdiag {

namespace {

constexpr int64_t kUsersPerStream = 256;

struct KindName {
  ScenarioKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {ScenarioKind::kClean, "clean"},
    {ScenarioKind::kCoolOffBug, "cool_off_bug"},
    {ScenarioKind::kResidual, "residual"},
    {ScenarioKind::kDynamicTargeting, "dynamic_targeting"},
    {ScenarioKind::kDependentExperiments, "dependent_experiments"},
    {ScenarioKind::kBiasedImplementation, "biased_implementation"},
    {ScenarioKind::kTriggerDay, "trigger_day"},
    {ScenarioKind::kNovelty, "novelty"},
};

int WeekdayIndex(std::string_view day) {
  static constexpr std::string_view kDays[] = {"mon", "tue", "wed", "thu",
                                               "fri", "sat", "sun"};
  for (int i = 0; i < 7; ++i) {
    if (kDays[i] == day) return i;
  }
  return -1;
}

MetricModel Metric(std::string id, Coverage coverage, double in_mean,
                   double off_mean) {
  MetricModel m;
  m.metric_id = std::move(id);
  m.coverage = coverage;
  m.in_mean = in_mean;
  m.off_mean = coverage == Coverage::kFullyCovered ? 0.0 : off_mean;
  return m;
}

}  // namespace

std::string_view ScenarioKindName(ScenarioKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

ScenarioKind ParseScenarioKind(std::string_view name) {
  for (const auto& k : kKindNames) {
    if (k.name == name) return k.kind;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown scenario kind '" + std::string(name) + "'");
}

double NoveltySchedule::Lift(int c) const {
  return base + amplitude * std::pow(static_cast<double>(std::max(c, 1)),
                                     -power);
}

std::string SimUserId(int64_t index) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "u%08lld", static_cast<long long>(index));
  return buf;
}

void ScenarioSpec::Validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::kInvalidArgument, "invalid scenario: " + msg);
  };
  auto prob = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " must be in [0,1]");
  };
  if (n_users < 0) fail("n_users must be >= 0");
  if (k_days < 1) fail("k_days must be >= 1");
  prob(p, "p");
  prob(click_probability, "click_probability");
  prob(evict_baseline, "evict_baseline");
  prob(parent_p, "parent_p");
  prob(ctr_control, "ctr_control");
  prob(ctr_treatment, "ctr_treatment");
  prob(direct_p, "direct_p");
  prob(direct_service_p, "direct_service_p");
  if (!(evict_baseline + evict_feedback <= 1.0) || evict_feedback < 0.0) {
    fail("eviction probabilities must stay in [0,1]");
  }
  if (return_lift < -1.0 ||
      (kind == ScenarioKind::kResidual && !(p * (1.0 + return_lift) <= 1.0))) {
    fail("return_lift pushes the visit probability outside [0,1]");
  }
  if (p_dispersion < 0.0 || activity_cv < 0.0) {
    fail("dispersion and activity_cv must be >= 0");
  }
  if (cool_off_impressions < 0) fail("cool_off_impressions must be >= 0");
  if (count_from_day < 1 || count_from_day > k_days) {
    fail("count_from_day must be in [1, k_days]");
  }
  if (late_cohort_day && (*late_cohort_day < 2 || *late_cohort_day > k_days)) {
    fail("late_cohort_day must be in [2, k_days]");
  }
  if (start_weekday && WeekdayIndex(*start_weekday) < 0) {
    fail("start_weekday must be one of mon..sun");
  }
  for (const auto& [day, lift] : weekday_lift) {
    if (WeekdayIndex(day) < 0) fail("weekday_lift keys must be mon..sun");
    if (!std::isfinite(lift) || lift <= -1.0) {
      fail("weekday_lift values must be finite and > -1");
    }
  }
  if (!weekday_lift.empty() && !start_weekday) {
    fail("weekday_lift needs start_weekday");
  }
  for (const auto& m : metrics) {
    if (m.metric_id.empty()) fail("metric id is empty");
    if (!(m.in_mean >= 0.0) || !(m.off_mean >= 0.0)) {
      fail("metric means must be >= 0");
    }
    if (!std::isfinite(m.in_lift) || !std::isfinite(m.off_lift) ||
        m.in_lift <= -1.0 || m.off_lift <= -1.0) {
      fail("metric lifts must be finite and > -1");
    }
    if (m.noise == NoiseFamily::kContinuous && !(m.cv > 0.0)) {
      fail("continuous metrics need cv > 0");
    }
  }
  if (novelty && (!std::isfinite(novelty->base) ||
                  !std::isfinite(novelty->amplitude) || novelty->power < 0)) {
    fail("novelty schedule must be finite with power >= 0");
  }
  ExperimentConfig probe;
  probe.experiment_id = experiment_id;
  probe.hash_id = "probe";
  probe.variants = variants;
  probe.Validate();
}

ScenarioSpec ScenarioSpec::Resolved() const {
  ScenarioSpec s = *this;
  if (s.hash_id.empty()) s.hash_id = "hash-" + std::to_string(s.seed);
  if (s.metrics.empty()) {
    switch (s.kind) {
      case ScenarioKind::kClean:
      case ScenarioKind::kBiasedImplementation:
        s.metrics = {Metric("page_views", Coverage::kPartiallyCovered, 4, 2),
                     Metric("widget_clicks", Coverage::kFullyCovered, 1, 0)};
        break;
      case ScenarioKind::kTriggerDay: {
        auto pv = Metric("page_views", Coverage::kPartiallyCovered, 4, 2);
        pv.in_lift = 0.10;
        auto wc = Metric("widget_clicks", Coverage::kFullyCovered, 1, 0);
        wc.in_lift = 0.10;
        s.metrics = {pv, wc};
        break;
      }
      case ScenarioKind::kNovelty:
        s.metrics = {Metric("widget_clicks", Coverage::kFullyCovered, 50, 0)};
        break;
      case ScenarioKind::kCoolOffBug:
      case ScenarioKind::kResidual:
      case ScenarioKind::kDynamicTargeting:
      case ScenarioKind::kDependentExperiments:
        // Fixed event model; see the generators below.
        break;
    }
  }
  if (s.kind == ScenarioKind::kNovelty && !s.novelty) {
    s.novelty = NoveltySchedule{-0.062, 0.162, 0.35};
  }
  if (s.kind == ScenarioKind::kBiasedImplementation && s.services.empty()) {
    s.services = {"router"};
  }
  return s;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

class Generator {
 public:
  explicit Generator(const ScenarioSpec& spec) : spec_(spec) {
    auto& config = out_.primary.config;
    config.experiment_id = spec_.experiment_id;
    config.hash_id = spec_.hash_id;
    config.variants = spec_.variants;
    config.count_from_day = spec_.count_from_day;
    config.end_day = spec_.k_days;
    config.start_weekday = spec_.start_weekday;
    control_ = ResolveArms(config).control;
    const size_t nv = spec_.variants.size();
    auto& truth = out_.truth;
    truth.exposed_users.assign(nv, 0);
    truth.new_by_day.assign(nv, std::vector<int64_t>(spec_.k_days, 0));
    truth.returned_by_day.assign(nv, std::vector<int64_t>(spec_.k_days, 0));
    truth.metric_totals.resize(nv);
    truth.page_visitors.assign(nv, 0);
    truth.p = spec_.p;
    for (const auto& m : spec_.metrics) {
      truth.coverage[m.metric_id] = m.coverage;
      truth.in_lift[m.metric_id] = m.in_lift;
      truth.off_lift[m.metric_id] = m.off_lift;
      if (m.coverage == Coverage::kPartiallyCovered && m.off_mean > 0.0 &&
          truth.r == 0.0) {
        truth.r = m.in_mean / m.off_mean;
      }
    }
    if (spec_.start_weekday) start_weekday_ = WeekdayIndex(*spec_.start_weekday);
    for (const auto& [day, lift] : spec_.weekday_lift) {
      weekday_lift_[WeekdayIndex(day)] = lift;
    }
    late_variant_ = config.VariantIndex("treatment_late");
  }

  GeneratedExperiment Run() {
    const auto& config = out_.primary.config;
    out_.primary.events.reserve(static_cast<size_t>(
        spec_.n_users * spec_.k_days * std::max(spec_.p, 0.05) * 3));
    if (spec_.kind == ScenarioKind::kDynamicTargeting) {
      targets_.emplace();
      for (int d = 1; d <= spec_.k_days; ++d) (*targets_)[d];
    }
    if (spec_.kind == ScenarioKind::kDependentExperiments) {
      GeneratedLog sibling;
      sibling.config = config;
      sibling.config.experiment_id = spec_.experiment_id + "_parent";
      sibling.config.count_from_day = 1;
      out_.sibling = std::move(sibling);
    }
    std::mt19937_64 engine;
    for (int64_t i = 0; i < spec_.n_users; ++i) {
      if (i % kUsersPerStream == 0) {
        engine = KeyedEngine(spec_.seed, static_cast<uint64_t>(i / kUsersPerStream));
      }
      User user;
      user.id = SimUserId(i);
      user.variant = AssignVariant(config, user.id);
      user.treated = user.variant != control_;
      SimulateUser(user, engine);
      FinishUser(user);
    }
    if (targets_) out_.primary.config.target_membership = std::move(*targets_);
    out_.truth.label = Label();
    return std::move(out_);
  }

 private:
  struct User {
    std::string id;
    int variant = 0;
    bool treated = false;
    int last_exposure_day = 0;
    bool exposed_in_range = false;
    bool visited_in_range = false;
  };

  std::string Label() const {
    switch (spec_.kind) {
      case ScenarioKind::kCoolOffBug:
        return "FeedbackLoop:BiasedImplementation/CoolOff";
      case ScenarioKind::kResidual:
        return "FeedbackLoop:Residual/EngagementChange";
      case ScenarioKind::kDynamicTargeting:
        return spec_.evict_feedback > 0.0 ? "DynamicTargeting" : "None";
      case ScenarioKind::kDependentExperiments:
        return "DependentExperiments";
      case ScenarioKind::kBiasedImplementation:
        return "FeedbackLoop:BiasedImplementation";
      default:
        return "None";
    }
  }

  bool TreatedOn(const User& user, int day) const {
    if (!user.treated) return false;
    if (user.variant == late_variant_ && spec_.late_cohort_day) {
      return day >= *spec_.late_cohort_day;
    }
    return true;
  }

  double WeekdayLift(int day) const {
    if (start_weekday_ < 0) return 0.0;
    return weekday_lift_[(start_weekday_ + day - 1) % 7];
  }

  static double Uniform(std::mt19937_64& engine) {
    return UnitInterval(engine());
  }

  double DrawActivity(std::mt19937_64& engine) const {
    if (spec_.activity_cv <= 0.0) return 1.0;
    const double shape = 1.0 / (spec_.activity_cv * spec_.activity_cv);
    std::gamma_distribution<double> gamma(shape, 1.0 / shape);
    return gamma(engine);
  }

  double DrawTriggerProbability(std::mt19937_64& engine) const {
    if (spec_.p_dispersion <= 0.0 || spec_.p <= 0.0 || spec_.p >= 1.0) {
      return spec_.p;
    }
    const double conc = 1.0 / spec_.p_dispersion;
    std::gamma_distribution<double> ga(spec_.p * conc, 1.0);
    std::gamma_distribution<double> gb((1.0 - spec_.p) * conc, 1.0);
    const double a = ga(engine);
    const double b = gb(engine);
    return a + b > 0.0 ? a / (a + b) : spec_.p;
  }

  static double DrawValue(const MetricModel& m, double mean,
                          std::mt19937_64& engine) {
    if (mean <= 0.0) return 0.0;
    if (m.noise == NoiseFamily::kCount) {
      std::poisson_distribution<int64_t> poisson(mean);
      return static_cast<double>(poisson(engine));
    }
    const double s2 = std::log1p(m.cv * m.cv);
    std::lognormal_distribution<double> lognormal(std::log(mean) - 0.5 * s2,
                                                  std::sqrt(s2));
    return lognormal(engine);
  }

  void Expose(User& user, int day, std::optional<std::string> service = {}) {
    ExposureEvent e;
    e.user_id = user.id;
    e.experiment_id = spec_.experiment_id;
    e.variant = spec_.variants[user.variant].label;
    e.day = day;
    e.service_tag = std::move(service);
    out_.primary.events.emplace_back(std::move(e));
    ++out_.truth.exposure_events;
    if (day >= spec_.count_from_day) user.exposed_in_range = true;
    if (user.last_exposure_day == day) return;
    if (user.last_exposure_day == 0) {
      ++out_.truth.new_by_day[user.variant][day - 1];
      ++out_.truth.exposed_users[user.variant];
    } else {
      ++out_.truth.returned_by_day[user.variant][day - 1];
    }
    user.last_exposure_day = day;
  }

  void Emit(const User& user, int day, const std::string& metric, double value,
            const std::optional<std::string>& source,
            GeneratedLog* log = nullptr) {
    if (value == 0.0) return;
    MetricEvent m;
    m.user_id = user.id;
    m.day = day;
    m.metric_id = metric;
    m.value = value;
    m.source_tag = source;
    if (log == nullptr) {
      out_.primary.events.emplace_back(std::move(m));
      ++out_.truth.metric_events;
      out_.truth.metric_totals[user.variant][metric] += value;
    } else {
      log->events.emplace_back(std::move(m));
    }
  }

  std::optional<std::string> PickService(std::mt19937_64& engine) const {
    if (spec_.services.empty()) return std::nullopt;
    const auto i = static_cast<size_t>(Uniform(engine) * spec_.services.size());
    return spec_.services[std::min(i, spec_.services.size() - 1)];
  }

  void SimulateUser(User& user, std::mt19937_64& engine) {
    switch (spec_.kind) {
      case ScenarioKind::kCoolOffBug:
        CoolOff(user, engine);
        break;
      case ScenarioKind::kResidual:
        Residual(user, engine);
        break;
      case ScenarioKind::kDynamicTargeting:
        DynamicTargeting(user, engine);
        break;
      case ScenarioKind::kDependentExperiments:
        Dependent(user, engine);
        break;
      default:
        Standard(user, engine);
        break;
    }
  }

  void FinishUser(const User& user) {
    if (user.visited_in_range) ++out_.truth.page_visitors[user.variant];
    if (spec_.kind == ScenarioKind::kCoolOffBug && user.treated &&
        user.visited_in_range && !user.exposed_in_range) {
      ++out_.truth.suppressed_users;
    }
  }

  // Trigger with probability p per day; metric contributions per day depend
  // on whether the day is a trigger day.
  void Standard(User& user, std::mt19937_64& engine) {
    const double activity = DrawActivity(engine);
    const double p_user = DrawTriggerProbability(engine);
    int treated_triggers = 0;
    for (int d = 1; d <= spec_.k_days; ++d) {
      const bool triggered = Uniform(engine) < p_user;
      const bool treated = TreatedOn(user, d);
      if (triggered) {
        Expose(user, d, PickService(engine));
        if (d >= spec_.count_from_day) user.visited_in_range = true;
        if (treated) ++treated_triggers;
      }
      if (spec_.kind == ScenarioKind::kBiasedImplementation && user.treated &&
          Uniform(engine) < spec_.direct_service_p) {
        Expose(user, d, std::string("direct"));
      }
      // No effect before the user first sees the treatment.
      const bool affected = treated && user.last_exposure_day > 0;
      for (const auto& m : spec_.metrics) {
        double mean = triggered ? m.in_mean : m.off_mean;
        if (affected) {
          double lift = triggered ? m.in_lift : m.off_lift;
          if (triggered && spec_.novelty) {
            lift = spec_.novelty->Lift(treated_triggers);
          }
          if (triggered) lift += WeekdayLift(d);
          mean *= 1.0 + lift;
        }
        Emit(user, d, m.metric_id, DrawValue(m, mean * activity, engine),
             m.source_tag);
      }
    }
  }

  // Treatment stops evaluating the experiment once a user is cooled off
  // (more than the cap in impressions, or any click), so the exposure event
  // is lost while the page view is still tracked.
  void CoolOff(User& user, std::mt19937_64& engine) {
    int impressions = 0;
    int clicks = 0;
    static const std::optional<std::string> kFeed = "feed";
    for (int d = 1; d <= spec_.k_days; ++d) {
      if (!(Uniform(engine) < spec_.p)) continue;
      Emit(user, d, "page_views", 1.0, kFeed);
      if (d >= spec_.count_from_day) user.visited_in_range = true;
      const bool click = Uniform(engine) < spec_.click_probability;
      if (user.treated &&
          (impressions > spec_.cool_off_impressions || clicks > 0)) {
        continue;
      }
      Expose(user, d);
      ++impressions;
      if (click) {
        ++clicks;
        Emit(user, d, "widget_clicks", 1.0, std::nullopt);
      }
    }
  }

  // Treatment raises the chance of coming back after the first exposure.
  void Residual(User& user, std::mt19937_64& engine) {
    static const std::optional<std::string> kFeed = "feed";
    for (int d = 1; d <= spec_.k_days; ++d) {
      const double p = user.treated && user.last_exposure_day > 0
                           ? spec_.p * (1.0 + spec_.return_lift)
                           : spec_.p;
      if (!(Uniform(engine) < p)) continue;
      Emit(user, d, "page_views", 1.0, kFeed);
      if (d >= spec_.count_from_day) user.visited_in_range = true;
      Expose(user, d);
    }
  }

  // Everyone starts targeted. Treatment moves the targeting score of users
  // who trigger, evicting them from the target population.
  void DynamicTargeting(User& user, std::mt19937_64& engine) {
    static const std::optional<std::string> kJobs = "jobs";
    bool targeted = true;
    for (int d = 1; d <= spec_.k_days; ++d) {
      if (targeted) (*targets_)[d].push_back(user.id);
      const bool visit = Uniform(engine) < spec_.p;
      if (visit) {
        Emit(user, d, "page_views", 1.0, kJobs);
        if (d >= spec_.count_from_day) user.visited_in_range = true;
        if (targeted) Expose(user, d);
      }
      if (targeted) {
        double evict = spec_.evict_baseline;
        if (user.treated && visit) evict += spec_.evict_feedback;
        if (Uniform(engine) < evict) targeted = false;
      }
    }
  }

  // Parent (posting page) treatment changes the click-through to the child
  // (checkout page); both experiments share the hash id.
  void Dependent(User& user, std::mt19937_64& engine) {
    static const std::optional<std::string> kCheckout = "checkout";
    static const std::optional<std::string> kPosting = "posting";
    const int k = spec_.k_days;
    std::vector<char> parent(k + 2, 0);
    std::vector<char> checkout(k + 2, 0);
    const double ctr = user.treated ? spec_.ctr_treatment : spec_.ctr_control;
    for (int d = 1; d <= k; ++d) {
      if (Uniform(engine) < spec_.parent_p) {
        parent[d] = 1;
        if (Uniform(engine) < ctr) checkout[Uniform(engine) < 0.5 ? d : d + 1] = 1;
      }
      if (Uniform(engine) < spec_.direct_p) checkout[d] = 1;
    }
    auto& sibling = *out_.sibling;
    for (int d = 1; d <= k; ++d) {
      if (parent[d]) {
        ExposureEvent e;
        e.user_id = user.id;
        e.experiment_id = sibling.config.experiment_id;
        e.variant = spec_.variants[user.variant].label;
        e.day = d;
        sibling.events.emplace_back(std::move(e));
        Emit(user, d, "posting_views", 1.0, kPosting, &sibling);
      }
      if (checkout[d]) {
        Expose(user, d);
        if (d >= spec_.count_from_day) user.visited_in_range = true;
        Emit(user, d, "checkout_views", 1.0, kCheckout);
      }
    }
  }

  const ScenarioSpec& spec_;
  GeneratedExperiment out_;
  int control_ = 0;
  int late_variant_ = -1;
  int start_weekday_ = -1;
  std::array<double, 7> weekday_lift_{};
  std::optional<std::map<int, std::vector<std::string>>> targets_;
};

}  // namespace

GeneratedExperiment Generate(const ScenarioSpec& input) {
  const ScenarioSpec spec = input.Resolved();
  spec.Validate();
  Generator generator(spec);
  GeneratedExperiment out = generator.Run();
  switch (spec.kind) {
    case ScenarioKind::kCoolOffBug:
    case ScenarioKind::kResidual:
      out.truth.tracking_metric = "page_views";
      out.truth.tracking_source = "feed";
      break;
    case ScenarioKind::kDynamicTargeting:
      out.truth.tracking_metric = "page_views";
      out.truth.tracking_source = "jobs";
      break;
    case ScenarioKind::kDependentExperiments:
      out.truth.tracking_metric = "checkout_views";
      out.truth.tracking_source = "checkout";
      break;
    default:
      break;
  }
  if (spec.kind == ScenarioKind::kCoolOffBug ||
      spec.kind == ScenarioKind::kResidual ||
      spec.kind == ScenarioKind::kDynamicTargeting ||
      spec.kind == ScenarioKind::kDependentExperiments) {
    for (const auto& [metric, total] : out.truth.metric_totals.front()) {
      out.truth.coverage.emplace(metric, Coverage::kPartiallyCovered);
    }
  }
  return out;
}

ScenarioSpec DefaultSpec(ScenarioKind kind, uint64_t seed) {
  ScenarioSpec s;
  s.kind = kind;
  s.seed = seed;
  switch (kind) {
    case ScenarioKind::kCoolOffBug:
      s.count_from_day = 4;
      break;
    case ScenarioKind::kResidual:
    case ScenarioKind::kDynamicTargeting:
      s.count_from_day = 8;
      break;
    case ScenarioKind::kNovelty:
      s.p = 1.0;
      s.k_days = 7;
      s.activity_cv = 0.3;
      s.n_users = 40000;
      break;
    default:
      break;
  }
  return s;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

json MetricToJson(const MetricModel& m) {
  json j = {{"metric_id", m.metric_id},
            {"coverage", CoverageName(m.coverage)},
            {"noise", m.noise == NoiseFamily::kCount ? "count" : "continuous"},
            {"in_mean", m.in_mean},
            {"off_mean", m.off_mean},
            {"in_lift", m.in_lift},
            {"off_lift", m.off_lift},
            {"cv", m.cv}};
  if (m.source_tag) j["source_tag"] = *m.source_tag;
  return j;
}

MetricModel MetricFromJson(const json& j) {
  MetricModel m;
  m.metric_id = j.at("metric_id").get<std::string>();
  const std::string coverage = j.value("coverage", "partially_covered");
  if (coverage == "fully_covered") {
    m.coverage = Coverage::kFullyCovered;
  } else if (coverage == "partially_covered") {
    m.coverage = Coverage::kPartiallyCovered;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown coverage " + coverage);
  }
  const std::string noise = j.value("noise", "count");
  if (noise != "count" && noise != "continuous") {
    throw Error(ErrorCode::kInvalidArgument, "unknown noise family " + noise);
  }
  m.noise = noise == "count" ? NoiseFamily::kCount : NoiseFamily::kContinuous;
  m.in_mean = j.value("in_mean", m.in_mean);
  m.off_mean = j.value("off_mean", m.off_mean);
  if (m.coverage == Coverage::kFullyCovered) m.off_mean = 0.0;
  m.in_lift = j.value("in_lift", 0.0);
  m.off_lift = j.value("off_lift", 0.0);
  m.cv = j.value("cv", 1.0);
  if (j.contains("source_tag")) m.source_tag = j["source_tag"].get<std::string>();
  return m;
}

}  // namespace

nlohmann::json SpecToJson(const ScenarioSpec& spec) {
  json j;
  j["kind"] = ScenarioKindName(spec.kind);
  j["experiment_id"] = spec.experiment_id;
  j["hash_id"] = spec.hash_id;
  j["n_users"] = spec.n_users;
  j["k_days"] = spec.k_days;
  json variants = json::array();
  for (const auto& v : spec.variants) {
    variants.push_back({{"label", v.label}, {"fraction", v.fraction}});
  }
  j["variants"] = variants;
  j["p"] = spec.p;
  j["p_dispersion"] = spec.p_dispersion;
  j["activity_cv"] = spec.activity_cv;
  json metrics = json::array();
  for (const auto& m : spec.metrics) metrics.push_back(MetricToJson(m));
  j["metrics"] = metrics;
  if (spec.novelty) {
    j["novelty"] = {{"base", spec.novelty->base},
                    {"amplitude", spec.novelty->amplitude},
                    {"power", spec.novelty->power}};
  }
  if (spec.late_cohort_day) j["late_cohort_day"] = *spec.late_cohort_day;
  if (spec.start_weekday) j["start_weekday"] = *spec.start_weekday;
  j["weekday_lift"] = spec.weekday_lift;
  j["services"] = spec.services;
  j["count_from_day"] = spec.count_from_day;
  j["cool_off_impressions"] = spec.cool_off_impressions;
  j["click_probability"] = spec.click_probability;
  j["return_lift"] = spec.return_lift;
  j["evict_baseline"] = spec.evict_baseline;
  j["evict_feedback"] = spec.evict_feedback;
  j["parent_p"] = spec.parent_p;
  j["ctr_control"] = spec.ctr_control;
  j["ctr_treatment"] = spec.ctr_treatment;
  j["direct_p"] = spec.direct_p;
  j["direct_service_p"] = spec.direct_service_p;
  j["seed"] = spec.seed;
  return j;
}

ScenarioSpec SpecFromJson(const nlohmann::json& j) {
  ScenarioSpec s;
  try {
    if (!j.contains("seed")) {
      throw Error(ErrorCode::kInvalidArgument, "scenario seed is mandatory");
    }
    s = DefaultSpec(ParseScenarioKind(j.at("kind").get<std::string>()),
                    j.at("seed").get<uint64_t>());
    s.experiment_id = j.value("experiment_id", s.experiment_id);
    s.hash_id = j.value("hash_id", s.hash_id);
    s.n_users = j.value("n_users", s.n_users);
    s.k_days = j.value("k_days", s.k_days);
    if (j.contains("variants")) {
      s.variants.clear();
      for (const auto& v : j["variants"]) {
        s.variants.push_back({v.at("label").get<std::string>(),
                              v.at("fraction").get<double>()});
      }
    }
    s.p = j.value("p", s.p);
    s.p_dispersion = j.value("p_dispersion", s.p_dispersion);
    s.activity_cv = j.value("activity_cv", s.activity_cv);
    if (j.contains("metrics")) {
      for (const auto& m : j["metrics"]) s.metrics.push_back(MetricFromJson(m));
    }
    if (j.contains("novelty")) {
      const auto& n = j["novelty"];
      s.novelty = NoveltySchedule{n.value("base", 0.0), n.value("amplitude", 0.0),
                                  n.value("power", 0.35)};
    }
    if (j.contains("late_cohort_day")) {
      s.late_cohort_day = j["late_cohort_day"].get<int>();
    }
    if (j.contains("start_weekday")) {
      s.start_weekday = j["start_weekday"].get<std::string>();
    }
    if (j.contains("weekday_lift")) {
      s.weekday_lift = j["weekday_lift"].get<std::map<std::string, double>>();
    }
    if (j.contains("services")) {
      s.services = j["services"].get<std::vector<std::string>>();
    }
    s.count_from_day = j.value("count_from_day", s.count_from_day);
    s.cool_off_impressions =
        j.value("cool_off_impressions", s.cool_off_impressions);
    s.click_probability = j.value("click_probability", s.click_probability);
    s.return_lift = j.value("return_lift", s.return_lift);
    s.evict_baseline = j.value("evict_baseline", s.evict_baseline);
    s.evict_feedback = j.value("evict_feedback", s.evict_feedback);
    s.parent_p = j.value("parent_p", s.parent_p);
    s.ctr_control = j.value("ctr_control", s.ctr_control);
    s.ctr_treatment = j.value("ctr_treatment", s.ctr_treatment);
    s.direct_p = j.value("direct_p", s.direct_p);
    s.direct_service_p = j.value("direct_service_p", s.direct_service_p);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed scenario: ") +
                                       e.what());
  }
  s.Resolved().Validate();
  return s;
}

nlohmann::json TruthToJson(const GroundTruth& truth) {
  json j;
  j["label"] = truth.label;
  j["p"] = truth.p;
  j["r"] = truth.r;
  json coverage = json::object();
  for (const auto& [m, c] : truth.coverage) coverage[m] = CoverageName(c);
  j["coverage"] = coverage;
  j["in_lift"] = truth.in_lift;
  j["off_lift"] = truth.off_lift;
  j["exposed_users"] = truth.exposed_users;
  j["new_by_day"] = truth.new_by_day;
  j["returned_by_day"] = truth.returned_by_day;
  j["metric_totals"] = truth.metric_totals;
  j["exposure_events"] = truth.exposure_events;
  j["metric_events"] = truth.metric_events;
  j["suppressed_users"] = truth.suppressed_users;
  j["page_visitors"] = truth.page_visitors;
  if (truth.tracking_metric) j["tracking_metric"] = *truth.tracking_metric;
  if (truth.tracking_source) j["tracking_source"] = *truth.tracking_source;
  return j;
}

}  // namespace expdiag
