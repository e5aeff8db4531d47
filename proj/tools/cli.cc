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

#include "cli.h"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "expdiag/corpus.h"
#include "expdiag/diagnosis.h"
#include "expdiag/error.h"
#include "expdiag/event_io.h"
#include "expdiag/metacorr.h"
#include "expdiag/simulator.h"
#include "expdiag/store.h"
#include "expdiag/temporal.h"
#include "expdiag/trigger.h"

namespace expdiag::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr char kToolVersion[] = "1.0.0";

std::optional<uint64_t> EnvU64(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v, &end, 10);
  if (end == v || *end != '\0') {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(name) + " must be a non-negative integer");
  }
  return x;
}

std::string Timestamp() {
  const auto epoch = EnvU64("SOURCE_DATE_EPOCH").value_or(0);
  const std::time_t t = static_cast<std::time_t>(epoch);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects what went into a run; embedded in every report.
class Manifest {
 public:
  // Output locations are left out so a report does not depend on where it
  // was written.
  Manifest(std::string command, const std::vector<std::string>& args)
      : command_(std::move(command)) {
    for (size_t i = 0; i < args.size(); ++i) {
      const std::string& a = args[i];
      if (a == "--out" || a == "--plot-dir") {
        ++i;
        continue;
      }
      if (a.rfind("--out=", 0) == 0 || a.rfind("--plot-dir=", 0) == 0) continue;
      args_.push_back(a);
    }
  }

  void AddInput(const std::string& role, const std::string& path) {
    if (!fs::exists(path)) {
      throw Error(ErrorCode::kNotFound, role + " not found: " + path);
    }
    inputs_.push_back({{"role", role}, {"path", path},
                       {"sha256", FileDigest(path)}});
  }
  void AddConfig(const std::string& path) {
    if (!fs::exists(path)) {
      throw Error(ErrorCode::kNotFound, "config not found: " + path);
    }
    configs_.push_back(path);
    AddInput("config", path);
  }
  void SetSeed(const std::string& name, uint64_t seed) { seeds_[name] = seed; }

  json ToJson() const {
    return {{"command", command_},
            {"arguments", args_},
            {"tool_version", kToolVersion},
            {"config_paths", configs_},
            {"inputs", inputs_},
            {"seeds", seeds_},
            {"timestamp", Timestamp()}};
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  std::vector<std::string> configs_;
  json inputs_ = json::array();
  json seeds_ = json::object();
};

json Report(const Manifest& manifest, const std::string& kind, json result) {
  return {{"schema_version", kReportSchemaVersion},
          {"report", kind},
          {"manifest", manifest.ToJson()},
          {"result", std::move(result)}};
}

void Emit(const json& report, const std::string& out_path, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
  } else {
    WriteFile(out_path, text);
  }
}

void WritePlot(const std::string& dir, const std::string& name,
               const std::string& table) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  WriteFile(fs::path(dir) / name, table);
}

json ErrorJson(ErrorCode code, const std::string& message) {
  return {{"error", {{"code", ErrorCodeName(code)}, {"message", message}}}};
}

IngestedLog LoadLog(const std::string& events_path,
                    const std::string& config_path) {
  const ExperimentConfig config = LoadConfig(config_path);
  const std::vector<Event> events = ReadEvents(events_path);
  return Ingest(events, config);
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

// Lift of one metric over a range, or the reason it is undefined.
json LiftOrReason(const IngestedLog& log, DayRange range, PopulationMode mode,
                  int metric, ArmPair arms) {
  const auto s = BuildMetricSummaries(log, range, mode, metric);
  json j = {{"range", range.ToString()},
            {"population", PopulationModeName(mode)}};
  try {
    j["lift"] = DeltaToJson(DeltaPercent(s[arms.treatment], s[arms.control]));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInsufficientData &&
        e.code() != ErrorCode::kUndefined) {
      throw;
    }
    j["lift"] = nullptr;
    j["reason"] = e.what();
  }
  return j;
}

std::string Fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// ---- analyze -------------------------------------------------------------

struct AnalyzeArgs {
  std::string events;
  std::string config;
  std::string range;
  std::string metrics;
  std::string treatment;
  std::string out;
  std::string plot_dir;
};

int Analyze(const AnalyzeArgs& a, const std::vector<std::string>& argv,
            std::ostream& out) {
  Manifest manifest("analyze", argv);
  manifest.AddConfig(a.config);
  manifest.AddInput("events", a.events);
  const IngestedLog log = LoadLog(a.events, a.config);
  const ArmPair arms =
      a.treatment.empty() ? ResolveArms(log.config())
                          : ResolveArms(log.config(), a.treatment);
  // A log ending on day L is analyzed on day L + 1: cross-day [first, L]
  // and single-day [L, L].
  const DayRange cross =
      a.range.empty() ? log.full_range() : ParseDayRange(a.range);
  const DayRange single = DayRange::Single(cross.last);
  std::vector<std::string> metrics =
      a.metrics.empty() ? log.metric_names() : SplitList(a.metrics);

  json per_metric = json::array();
  std::string table = "metric\tanalysis\trange\tdelta_pct\tstd_error\tp_value\n";
  for (const auto& m : metrics) {
    const int idx = log.MetricIndex(m);
    const CoverageClass cov = ClassifyCoverage(log, m);
    json entry = {{"metric_id", m},
                  {"coverage", CoverageName(cov.coverage)},
                  {"coverage_evidence", cov.evidence},
                  {"cross_day",
                   LiftOrReason(log, cross, PopulationMode::kTriggered, idx,
                                arms)},
                  {"single_day",
                   LiftOrReason(log, single, PopulationMode::kSingleDay, idx,
                                arms)}};
    for (const char* kind : {"cross_day", "single_day"}) {
      const json& lift = entry[kind]["lift"];
      if (lift.is_null()) continue;
      table += m + "\t" + kind + "\t" + entry[kind]["range"].get<std::string>() +
               "\t" + Fmt(lift["delta_pct"].get<double>()) + "\t" +
               Fmt(lift["std_error"].get<double>()) + "\t" +
               Fmt(lift["p_value"].get<double>()) + "\n";
    }
    per_metric.push_back(std::move(entry));
  }
  json result = {{"experiment_id", log.config().experiment_id},
                 {"treatment", log.config().variants[arms.treatment].label},
                 {"control", log.config().variants[arms.control].label},
                 {"users", log.user_count()},
                 {"exposed_users", log.exposed_user_count()},
                 {"metrics", std::move(per_metric)}};
  try {
    result["ssr"] = SsrToJson(SsrTest(log, cross));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInsufficientData) throw;
    result["ssr"] = nullptr;
  }
  Emit(Report(manifest, "analyze", std::move(result)), a.out, out);
  WritePlot(a.plot_dir, "lifts.tsv", table);
  return kExitOk;
}

// ---- diagnose ------------------------------------------------------------

struct DiagnoseArgs {
  std::string events;
  std::string config;
  std::vector<std::string> siblings;
  std::vector<std::string> sibling_configs;
  double alpha = kDefaultSsrAlpha;
  std::string range;
  std::string tracking_metric;
  std::string tracking_source;
  std::string out;
  std::string plot_dir;
};

int Diagnose(const DiagnoseArgs& a, const std::vector<std::string>& argv,
             std::ostream& out) {
  if (a.siblings.size() != a.sibling_configs.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "each --sibling needs a matching --sibling-config");
  }
  Manifest manifest("diagnose", argv);
  manifest.AddConfig(a.config);
  manifest.AddInput("events", a.events);
  for (size_t i = 0; i < a.siblings.size(); ++i) {
    manifest.AddConfig(a.sibling_configs[i]);
    manifest.AddInput("sibling_events", a.siblings[i]);
  }
  const IngestedLog log = LoadLog(a.events, a.config);
  std::vector<IngestedLog> siblings;
  siblings.reserve(a.siblings.size());
  for (size_t i = 0; i < a.siblings.size(); ++i) {
    siblings.push_back(LoadLog(a.siblings[i], a.sibling_configs[i]));
  }
  std::vector<const IngestedLog*> sibling_ptrs;
  for (const auto& s : siblings) sibling_ptrs.push_back(&s);

  DiagnosisOptions options;
  options.alpha = a.alpha;
  if (!a.range.empty()) options.range = ParseDayRange(a.range);
  if (!a.tracking_metric.empty() || !a.tracking_source.empty()) {
    TrackingPredicate pred;
    if (!a.tracking_metric.empty()) pred.metric_id = a.tracking_metric;
    if (!a.tracking_source.empty()) pred.source_tag = a.tracking_source;
    options.tracking = pred;
  }
  const DiagnosisReport report = expdiag::Diagnose(log, sibling_ptrs, options);
  Emit(Report(manifest, "diagnosis", DiagnosisToJson(report)), a.out, out);
  WritePlot(a.plot_dir, "new_returned.tsv",
            NewReturnedTable(report, log.config()));
  return report.primary.mismatch() ? kExitFlagged : kExitOk;
}

// ---- temporal ------------------------------------------------------------

struct TemporalArgs {
  std::string events;
  std::string config;
  std::string metric;
  std::string treatment;
  std::string cohort_variant;
  std::string seasoned_variant = "treatment";
  int cohort_split = 0;
  int cohort_window = 1;
  std::string out;
  std::string plot_dir;
};

int Temporal(const TemporalArgs& a, const std::vector<std::string>& argv,
             std::ostream& out) {
  Manifest manifest("temporal", argv);
  manifest.AddConfig(a.config);
  manifest.AddInput("events", a.events);
  const IngestedLog log = LoadLog(a.events, a.config);
  const ArmPair arms =
      a.treatment.empty() ? ResolveArms(log.config())
                          : ResolveArms(log.config(), a.treatment);
  const ImpactSeries series = BuildImpactSeries(log, a.metric, arms);
  json result = {{"experiment_id", log.config().experiment_id},
                 {"metric_id", a.metric},
                 {"series", ImpactSeriesToJson(series)}};
  bool flagged = false;
  auto skipped = [](const Error& e) {
    if (e.code() != ErrorCode::kInsufficientData &&
        e.code() != ErrorCode::kUndefined) {
      throw e;
    }
    return json{{"skipped", e.what()}};
  };

  try {
    const DecomposedSums dec =
        DecomposeInOff(log, a.metric, log.full_range(), arms);
    const PrEstimate pr = EstimatePR(dec);
    result["p_r"] = {{"p", pr.p},
                     {"r", pr.r ? json(*pr.r) : json(nullptr)},
                     {"note", pr.note}};
    const TriggerDayFinding f = DetectTriggerDay(series, dec);
    flagged |= f.flag;
    result["trigger_day"] = TriggerDayToJson(f);
    WritePlot(a.plot_dir, "wk.tsv", WkTable(series, f));
  } catch (const Error& e) {
    result["trigger_day"] = skipped(e);
  }
  try {
    const NoveltyFinding f = DetectNovelty(series);
    flagged |= f.flag;
    result["novelty"] = NoveltyToJson(f);
    WritePlot(a.plot_dir, "novelty.tsv", NoveltyTable(f));
  } catch (const Error& e) {
    result["novelty"] = skipped(e);
  }
  if (!a.cohort_variant.empty()) {
    CohortOptions options;
    options.fresh_variant = a.cohort_variant;
    options.seasoned_variant = a.seasoned_variant;
    options.split_day = a.cohort_split;
    options.window = a.cohort_window;
    result["cohort"] =
        CohortToJson(CohortNoveltyMagnitude(log, a.metric, options));
  }
  result["flag"] = flagged;
  Emit(Report(manifest, "temporal", std::move(result)), a.out, out);
  return flagged ? kExitFlagged : kExitOk;
}

// ---- meta ----------------------------------------------------------------

struct MetaArgs {
  std::string corpus_dir;
  std::string pair;
  std::optional<double> rho;
  int min_days = 7;
  int early_day = 7;
  double threshold = 0.6;
  int64_t n_sim = 200000;
  std::string out;
  std::string plot_dir;
};

int Meta(const MetaArgs& a, const std::vector<std::string>& argv,
         std::ostream& out) {
  const auto pair = SplitList(a.pair);
  if (pair.size() != 2 || pair[0] == pair[1]) {
    throw Error(ErrorCode::kInvalidArgument, "--pair needs two metrics X,Y");
  }
  const std::string& x = pair[0];
  const std::string& y = pair[1];
  Manifest manifest("meta", argv);
  const std::string store_path = (fs::path(a.corpus_dir) / "store.bin").string();
  manifest.AddInput("store", store_path);
  double rho = 0.0;
  if (a.rho) {
    rho = *a.rho;
  } else {
    const std::string corr_path =
        (fs::path(a.corpus_dir) / "correlations.json").string();
    manifest.AddInput("correlations", corr_path);
    json corr;
    try {
      corr = json::parse(ReadFile(corr_path));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, "malformed correlations: " +
                                         std::string(e.what()));
    }
    const std::string k1 = x + "|" + y;
    const std::string k2 = y + "|" + x;
    if (corr.contains(k1)) {
      rho = corr[k1].get<double>();
    } else if (corr.contains(k2)) {
      rho = corr[k2].get<double>();
    } else {
      throw Error(ErrorCode::kNotFound, "no correlation for " + k1);
    }
  }
  ComovementOptions co;
  co.n_sim = a.n_sim;
  co.seed = EnvU64("EXPDIAG_SEED").value_or(1);
  manifest.SetSeed("comovement", co.seed);

  const SummaryStore store = LoadStore(store_path);
  const History history = BuildHistory(store, a.min_days);
  json result = {{"pair", {x, y}},
                 {"rho", rho},
                 {"records", history.records.size()},
                 {"excluded", HistoryToJson(history)["excluded"]}};
  auto refusal = [](const Error& e) {
    if (e.code() != ErrorCode::kInsufficientData) throw e;
    return json{{"refused", e.what()}};
  };
  try {
    result["comovement"] = ComovementToJson(Comovement(history, x, y, rho, co));
  } catch (const Error& e) {
    result["comovement"] = refusal(e);
  }
  try {
    result["delta_relation"] = DeltaRelationToJson(FitDeltaRelation(history, x, y));
  } catch (const Error& e) {
    result["delta_relation"] = refusal(e);
  }
  try {
    const EmFit px = FitMetricPrior(history, x);
    const EmFit py = FitMetricPrior(history, y);
    const Conditionals cond = EstimateConditionals(history, x, y, rho, co);
    auto prior_json = [](const EmFit& f) {
      return json{{"pi1", f.prior.pi1},
                  {"v_sq", f.prior.v_sq},
                  {"iterations", f.iterations},
                  {"converged", f.converged},
                  {"unidentifiable", f.unidentifiable}};
    };
    result["priors"] = {{x, prior_json(px)}, {y, prior_json(py)}};
    result["conditionals"] = {{"y1_given_x1", cond.y1_given_x1()},
                              {"y1_given_x0", cond.y1_given_x0()}};
    const auto scores = ScoreEarlyIndicators(store, x, y, a.early_day, px.prior,
                                             py.prior, cond, a.threshold);
    json scored = json::array();
    std::string table = "key\tposterior_x\tposterior\tflag\n";
    int64_t flagged = 0;
    for (const auto& s : scores) {
      scored.push_back(EarlyScoreToJson(s));
      flagged += s.result.flag ? 1 : 0;
      table += s.key + "\t" + Fmt(s.result.posterior_x) + "\t" +
               Fmt(s.result.posterior) + "\t" + (s.result.flag ? "1" : "0") +
               "\n";
    }
    result["early_indicator"] = {{"day", a.early_day},
                                 {"threshold", a.threshold},
                                 {"flagged", flagged},
                                 {"scores", std::move(scored)}};
    WritePlot(a.plot_dir, "early_indicator.tsv", table);
  } catch (const Error& e) {
    result["early_indicator"] = refusal(e);
  }
  Emit(Report(manifest, "meta", std::move(result)), a.out, out);
  return kExitOk;
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  std::string spec;
  std::string out;
};

void WriteLog(const GeneratedLog& log, const fs::path& events,
              const fs::path& config) {
  std::ofstream f(events, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + events.string());
  WriteEvents(f, log.events);
  f.close();
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + events.string());
  SaveConfig(log.config, config);
}

int Simulate(const SimulateArgs& a, const std::vector<std::string>& argv,
             std::ostream& out) {
  if (a.out.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "simulate needs --out DIR");
  }
  Manifest manifest("simulate", argv);
  manifest.AddConfig(a.spec);
  json spec_json;
  try {
    spec_json = json::parse(ReadFile(a.spec));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "malformed spec: " + std::string(e.what()));
  }
  if (!spec_json.is_object()) {
    throw Error(ErrorCode::kParse, "spec must be a JSON object");
  }
  if (!spec_json.contains("seed")) {
    if (auto seed = EnvU64("EXPDIAG_SEED")) spec_json["seed"] = *seed;
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::vector<fs::path> outputs;
  json resolved;
  if (spec_json.value("kind", "") == "corpus") {
    const CorpusSpec spec = CorpusSpecFromJson(spec_json);
    manifest.SetSeed("corpus", spec.seed);
    const Corpus corpus = GenerateCorpus(spec);
    PersistStore(corpus.store, dir / "store.bin");
    WriteFile(dir / "correlations.json",
              CorpusCorrelationsToJson(corpus).dump(2) + "\n");
    WriteFile(dir / "truth.json", CorpusTruthToJson(corpus).dump(2) + "\n");
    outputs = {dir / "store.bin", dir / "correlations.json",
               dir / "truth.json"};
    resolved = CorpusSpecToJson(spec);
  } else {
    const ScenarioSpec spec = SpecFromJson(spec_json);
    manifest.SetSeed("scenario", spec.seed);
    const GeneratedExperiment exp = Generate(spec);
    WriteLog(exp.primary, dir / "events.jsonl", dir / "config.json");
    outputs = {dir / "events.jsonl", dir / "config.json"};
    if (exp.sibling) {
      WriteLog(*exp.sibling, dir / "sibling_events.jsonl",
               dir / "sibling_config.json");
      outputs.push_back(dir / "sibling_events.jsonl");
      outputs.push_back(dir / "sibling_config.json");
    }
    WriteFile(dir / "truth.json", TruthToJson(exp.truth).dump(2) + "\n");
    outputs.push_back(dir / "truth.json");
    resolved = SpecToJson(spec.Resolved());
  }
  json files = json::array();
  for (const auto& p : outputs) {
    files.push_back({{"file", p.filename().string()},
                     {"sha256", FileDigest(p.string())}});
  }
  const json report = Report(manifest, "simulation",
                             {{"spec", resolved}, {"outputs", files}});
  WriteFile(dir / "manifest.json", report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

std::string FileDigest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(
      EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kInternal, "sha256 init failed");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0 &&
        EVP_DigestUpdate(ctx.get(), buf, static_cast<size_t>(in.gcount())) !=
            1) {
      throw Error(ErrorCode::kInternal, "sha256 update failed");
    }
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) {
    throw Error(ErrorCode::kInternal, "sha256 final failed");
  }
  std::string hex;
  char h[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(h, sizeof(h), "%02x", md[i]);
    hex += h;
  }
  return hex;
}

int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Experiment diagnostics: SSR root causes, trigger-day and "
               "novelty effects, metric meta-analysis",
               "expdiag"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Cross-day and single-day lifts");
  analyze->add_option("events", aa.events, "Event log (JSON lines)")->required();
  analyze->add_option("--config", aa.config, "Experiment config")->required();
  analyze->add_option("--range", aa.range, "Cross-day range x,y");
  analyze->add_option("--metrics", aa.metrics, "Comma-separated metric ids");
  analyze->add_option("--treatment", aa.treatment, "Treatment variant label");
  analyze->add_option("--out", aa.out, "Report path (stdout if absent)");
  analyze->add_option("--plot-dir", aa.plot_dir, "Directory for plot data");

  DiagnoseArgs da;
  auto* diagnose = app.add_subcommand("diagnose", "Sample size ratio diagnosis");
  diagnose->add_option("events", da.events, "Primary event log")->required();
  diagnose->add_option("--config", da.config, "Primary config")->required();
  diagnose->add_option("--sibling", da.siblings,
                       "Event log of an experiment sharing the hash id");
  diagnose->add_option("--sibling-config", da.sibling_configs,
                       "Config of the matching --sibling");
  diagnose->add_option("--alpha", da.alpha, "Significance level")
      ->check(CLI::Range(0.0, 1.0));
  diagnose->add_option("--range", da.range, "Counting range x,y");
  diagnose->add_option("--tracking-metric", da.tracking_metric,
                       "Metric that reproduces the trigger condition");
  diagnose->add_option("--tracking-source", da.tracking_source,
                       "Source tag restricting --tracking-metric");
  diagnose->add_option("--out", da.out, "Report path (stdout if absent)");
  diagnose->add_option("--plot-dir", da.plot_dir, "Directory for plot data");

  TemporalArgs ta;
  auto* temporal = app.add_subcommand("temporal", "Trigger-day and novelty effects");
  temporal->add_option("events", ta.events, "Event log")->required();
  temporal->add_option("--config", ta.config, "Experiment config")->required();
  temporal->add_option("--metric", ta.metric, "Metric id")->required();
  temporal->add_option("--treatment", ta.treatment, "Treatment variant label");
  temporal->add_option("--cohort-variant", ta.cohort_variant,
                       "Late-exposed cohort variant");
  temporal->add_option("--seasoned-variant", ta.seasoned_variant,
                       "Variant treated from the start");
  temporal->add_option("--cohort-split", ta.cohort_split,
                       "First day the late cohort is treated");
  temporal->add_option("--cohort-window", ta.cohort_window, "Days compared");
  temporal->add_option("--out", ta.out, "Report path (stdout if absent)");
  temporal->add_option("--plot-dir", ta.plot_dir, "Directory for plot data");

  MetaArgs ma;
  auto* meta = app.add_subcommand("meta", "Metric co-movement over past experiments");
  meta->add_option("corpus_dir", ma.corpus_dir,
                   "Directory with store.bin and correlations.json")
      ->required();
  meta->add_option("--pair", ma.pair, "Metric pair X,Y")->required();
  meta->add_option("--rho", ma.rho, "User-level correlation of X and Y");
  meta->add_option("--min-days", ma.min_days, "Shortest usable run");
  meta->add_option("--early-day", ma.early_day, "Day scored by the early indicator");
  meta->add_option("--threshold", ma.threshold, "Posterior needed to flag")
      ->check(CLI::Range(0.0, 1.0));
  meta->add_option("--n-sim", ma.n_sim, "Draws for the null co-significance");
  meta->add_option("--out", ma.out, "Report path (stdout if absent)");
  meta->add_option("--plot-dir", ma.plot_dir, "Directory for plot data");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Generate a scenario or corpus");
  simulate->add_option("spec", sa.spec, "Scenario or corpus spec (JSON)")
      ->required();
  simulate->add_option("--out", sa.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << ErrorJson(ErrorCode::kInvalidArgument, e.what()).dump() << "\n";
    return kExitError;
  }

  try {
    if (*analyze) return Analyze(aa, args, out);
    if (*diagnose) return Diagnose(da, args, out);
    if (*temporal) return Temporal(ta, args, out);
    if (*meta) return Meta(ma, args, out);
    if (*simulate) return Simulate(sa, args, out);
  } catch (const Error& e) {
    err << ErrorJson(e.code(), e.what()).dump() << "\n";
    return kExitError;
  } catch (const fs::filesystem_error& e) {
    err << ErrorJson(ErrorCode::kIo, e.what()).dump() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << ErrorJson(ErrorCode::kInternal, e.what()).dump() << "\n";
    return kExitError;
  }
  err << ErrorJson(ErrorCode::kInvalidArgument, "no command").dump() << "\n";
  return kExitError;
}

}  // namespace expdiag::cli
