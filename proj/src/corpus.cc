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

#include "expdiag/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "expdiag/error.h"
#include "expdiag/rng.h"

namespace expdiag {

namespace {

struct Moments {
  int64_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void Add(double v) {
    ++n;
    sum += v;
    sum_sq += v * v;
  }
};

std::string ExperimentName(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "exp%04d", index + 1);
  return buf;
}

}  // namespace

void CorpusSpec::Validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::kInvalidArgument, "invalid corpus spec: " + msg);
  };
  auto prob = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " must be in [0,1]");
  };
  if (m < 1) fail("m must be >= 1");
  if (iterations < 1) fail("iterations must be >= 1");
  if (metric_x.empty() || metric_y.empty() || metric_x == metric_y) {
    fail("metric ids must be distinct and non-empty");
  }
  prob(pi1_x, "pi1_x");
  prob(pi1_y_alone, "pi1_y_alone");
  if (!(rho >= -1.0 && rho <= 1.0)) fail("rho must be in [-1,1]");
  for (double v : {lift_sd_x, lift_noise_y, lift_sd_y_alone, heterogeneity,
                   daily_sd_x, daily_sd_y}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail("spreads must be finite and >= 0");
    }
  }
  if (!std::isfinite(beta1)) fail("beta1 must be finite");
  if (!(mean_x > 0.0) || !(mean_y > 0.0)) fail("metric means must be > 0");
  if (min_users < 4 || max_users < min_users) {
    fail("need 4 <= min_users <= max_users");
  }
  if (!(min_p > 0.0) || !(max_p <= 1.0) || max_p < min_p) {
    fail("need 0 < min_p <= max_p <= 1");
  }
  if (checkpoints.empty() || checkpoints.front() < 1 ||
      !std::is_sorted(checkpoints.begin(), checkpoints.end()) ||
      std::adjacent_find(checkpoints.begin(), checkpoints.end()) !=
          checkpoints.end()) {
    fail("checkpoints must be strictly increasing days >= 1");
  }
}

nlohmann::json CorpusSpecToJson(const CorpusSpec& s) {
  return {{"kind", "corpus"},
          {"m", s.m},
          {"iterations", s.iterations},
          {"metric_x", s.metric_x},
          {"metric_y", s.metric_y},
          {"pi1_x", s.pi1_x},
          {"lift_sd_x", s.lift_sd_x},
          {"beta1", s.beta1},
          {"lift_noise_y", s.lift_noise_y},
          {"pi1_y_alone", s.pi1_y_alone},
          {"lift_sd_y_alone", s.lift_sd_y_alone},
          {"rho", s.rho},
          {"mean_x", s.mean_x},
          {"mean_y", s.mean_y},
          {"heterogeneity", s.heterogeneity},
          {"daily_sd_x", s.daily_sd_x},
          {"daily_sd_y", s.daily_sd_y},
          {"min_users", s.min_users},
          {"max_users", s.max_users},
          {"min_p", s.min_p},
          {"max_p", s.max_p},
          {"checkpoints", s.checkpoints},
          {"seed", s.seed}};
}

CorpusSpec CorpusSpecFromJson(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("seed")) {
    throw Error(ErrorCode::kInvalidArgument, "corpus spec needs a seed");
  }
  CorpusSpec s;
  try {
    s.m = j.value("m", s.m);
    s.iterations = j.value("iterations", s.iterations);
    s.metric_x = j.value("metric_x", s.metric_x);
    s.metric_y = j.value("metric_y", s.metric_y);
    s.pi1_x = j.value("pi1_x", s.pi1_x);
    s.lift_sd_x = j.value("lift_sd_x", s.lift_sd_x);
    s.beta1 = j.value("beta1", s.beta1);
    s.lift_noise_y = j.value("lift_noise_y", s.lift_noise_y);
    s.pi1_y_alone = j.value("pi1_y_alone", s.pi1_y_alone);
    s.lift_sd_y_alone = j.value("lift_sd_y_alone", s.lift_sd_y_alone);
    s.rho = j.value("rho", s.rho);
    s.mean_x = j.value("mean_x", s.mean_x);
    s.mean_y = j.value("mean_y", s.mean_y);
    s.heterogeneity = j.value("heterogeneity", s.heterogeneity);
    s.daily_sd_x = j.value("daily_sd_x", s.daily_sd_x);
    s.daily_sd_y = j.value("daily_sd_y", s.daily_sd_y);
    s.min_users = j.value("min_users", s.min_users);
    s.max_users = j.value("max_users", s.max_users);
    s.min_p = j.value("min_p", s.min_p);
    s.max_p = j.value("max_p", s.max_p);
    if (j.contains("checkpoints")) {
      s.checkpoints = j["checkpoints"].get<std::vector<int>>();
    }
    s.seed = j["seed"].get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("corpus spec: ") + e.what());
  }
  s.Validate();
  return s;
}

Corpus GenerateCorpus(const CorpusSpec& spec) {
  spec.Validate();
  Corpus corpus;
  corpus.spec = spec;
  const int n_check = static_cast<int>(spec.checkpoints.size());
  const int last = spec.checkpoints.back();
  const double rho_c = std::sqrt(std::max(0.0, 1.0 - spec.rho * spec.rho));
  double rho_weighted = 0.0;
  double rho_weight = 0.0;

  for (int e = 0; e < spec.m; ++e) {
    CorpusExperimentTruth truth;
    truth.experiment_id = ExperimentName(e);
    {
      auto engine = KeyedEngine(spec.seed, static_cast<uint64_t>(e));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::normal_distribution<double> normal(0.0, 1.0);
      const double lo = std::log(static_cast<double>(spec.min_users));
      const double hi = std::log(static_cast<double>(spec.max_users));
      truth.n_users =
          static_cast<int64_t>(std::llround(std::exp(lo + (hi - lo) * unit(engine))));
      truth.p = spec.min_p + (spec.max_p - spec.min_p) * unit(engine);
      truth.h1_x = unit(engine) < spec.pi1_x;
      const double z_x = normal(engine);
      const double z_y = normal(engine);
      const bool y_alone = unit(engine) < spec.pi1_y_alone;
      if (truth.h1_x) {
        truth.lift_x = spec.lift_sd_x * z_x;
        truth.lift_y = spec.beta1 * truth.lift_x + spec.lift_noise_y * z_y;
        truth.h1_y = truth.lift_y != 0.0;
      } else if (y_alone) {
        truth.lift_y = spec.lift_sd_y_alone * z_y;
        truth.h1_y = truth.lift_y != 0.0;
      }
      truth.lift_x = std::max(truth.lift_x, -0.9);
      truth.lift_y = std::max(truth.lift_y, -0.9);
    }

    for (int it = 1; it <= spec.iterations; ++it) {
      const std::string key = truth.experiment_id + "@" + std::to_string(it);
      const int64_t users = std::max<int64_t>(
          4, truth.n_users * it / spec.iterations);
      auto engine =
          KeyedEngine(spec.seed, static_cast<uint64_t>(e), static_cast<uint64_t>(it));
      std::normal_distribution<double> normal(0.0, 1.0);
      std::geometric_distribution<int> entry(truth.p);
      std::bernoulli_distribution coin(0.5);
      // [variant][checkpoint]
      std::vector<std::vector<Moments>> mx(2, std::vector<Moments>(n_check));
      std::vector<std::vector<Moments>> my(2, std::vector<Moments>(n_check));
      std::vector<std::vector<int64_t>> counts(2, std::vector<int64_t>(n_check));
      double cx = 0, cy = 0, cxx = 0, cyy = 0, cxy = 0;
      int64_t cn = 0;
      for (int64_t u = 0; u < users; ++u) {
        const int variant = coin(engine) ? 1 : 0;
        const int first = entry(engine) + 1;
        const double z1 = normal(engine);
        const double z2 = normal(engine);
        if (first > last) continue;
        const double ax = spec.heterogeneity * z1;
        const double ay = spec.heterogeneity * (spec.rho * z1 + rho_c * z2);
        const double lx = variant == 1 ? truth.lift_x : 0.0;
        const double ly = variant == 1 ? truth.lift_y : 0.0;
        const double day_x = spec.mean_x * (1.0 + lx) * (1.0 + ax);
        const double day_y = spec.mean_y * (1.0 + ly) * (1.0 + ay);
        double noise_x = 0.0;
        double noise_y = 0.0;
        int active = 0;
        for (int c = 0; c < n_check; ++c) {
          const int d = spec.checkpoints[c];
          if (d < first) continue;
          const int now = d - first + 1;
          const double added = static_cast<double>(now - active);
          active = now;
          const double e1 = normal(engine);
          const double e2 = normal(engine);
          noise_x += spec.daily_sd_x * std::sqrt(added) * e1;
          noise_y += spec.daily_sd_y * std::sqrt(added) *
                     (spec.rho * e1 + rho_c * e2);
          const double x = active * day_x + noise_x;
          const double y = active * day_y + noise_y;
          mx[variant][c].Add(x);
          my[variant][c].Add(y);
          ++counts[variant][c];
          if (c == n_check - 1 && variant == 0 && it == spec.iterations) {
            ++cn;
            cx += x;
            cy += y;
            cxx += x * x;
            cyy += y * y;
            cxy += x * y;
          }
        }
      }
      static const std::string kLabels[] = {"control", "treatment"};
      for (int v = 0; v < 2; ++v) {
        for (int c = 0; c < n_check; ++c) {
          const DayRange range{1, spec.checkpoints[c]};
          corpus.store.Add({key, kLabels[v], spec.metric_x, range, mx[v][c].n,
                            mx[v][c].sum, mx[v][c].sum_sq});
          corpus.store.Add({key, kLabels[v], spec.metric_y, range, my[v][c].n,
                            my[v][c].sum, my[v][c].sum_sq});
          corpus.store.AddUserCount({key, kLabels[v], range}, counts[v][c]);
        }
      }
      if (cn > 2) {
        const double n = static_cast<double>(cn);
        const double vx = cxx - cx * cx / n;
        const double vy = cyy - cy * cy / n;
        if (vx > 0.0 && vy > 0.0) {
          rho_weighted += n * (cxy - cx * cy / n) / std::sqrt(vx * vy);
          rho_weight += n;
        }
      }
    }
    corpus.truth.push_back(truth);
  }
  corpus.rho_observed = rho_weight > 0.0 ? rho_weighted / rho_weight : 0.0;
  return corpus;
}

nlohmann::json CorpusTruthToJson(const Corpus& corpus) {
  nlohmann::json experiments = nlohmann::json::array();
  for (const auto& t : corpus.truth) {
    experiments.push_back({{"experiment_id", t.experiment_id},
                           {"n_users", t.n_users},
                           {"p", t.p},
                           {"h1_x", t.h1_x},
                           {"h1_y", t.h1_y},
                           {"lift_x", t.lift_x},
                           {"lift_y", t.lift_y}});
  }
  return {{"spec", CorpusSpecToJson(corpus.spec)},
          {"rho_observed", corpus.rho_observed},
          {"experiments", experiments}};
}

nlohmann::json CorpusCorrelationsToJson(const Corpus& corpus) {
  return {{corpus.spec.metric_x + "|" + corpus.spec.metric_y,
           corpus.rho_observed}};
}

}  // namespace expdiag
