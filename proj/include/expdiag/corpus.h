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

#ifndef EXPDIAG_CORPUS_H_
#define EXPDIAG_CORPUS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "expdiag/store.h"

namespace expdiag {

// Many small experiments on two correlated continuous metrics, summarized
// straight into a SummaryStore under keys "<experiment>@<iteration>" with
// cumulative ranges [1, d] for every checkpoint d.
struct CorpusSpec {
  int m = 200;
  int iterations = 1;
  std::string metric_x = "sessions";
  std::string metric_y = "bookings";
  // Share of experiments moving X; lifts under H1 are N(0, lift_sd_x^2).
  double pi1_x = 0.3;
  double lift_sd_x = 0.07;
  // Y moves with X: lift_y = beta1 * lift_x + N(0, lift_noise_y^2).
  double beta1 = 0.5;
  double lift_noise_y = 0.005;
  // Y moves on its own in this share of experiments where X does not.
  double pi1_y_alone = 0.02;
  double lift_sd_y_alone = 0.05;
  // User-level correlation of the persistent and daily components.
  double rho = 0.3;
  // Per-user daily value: mean * (1 + lift) * (1 + a) + e with
  // a ~ N(0, heterogeneity^2) and e ~ N(0, daily_sd^2).
  double mean_x = 1.0;
  double mean_y = 1.0;
  double heterogeneity = 0.2;
  double daily_sd_x = 1.0;
  double daily_sd_y = 2.0;
  // Users per experiment, log-uniform in [min, max], and the per-day
  // probability of entering it, uniform in [min, max].
  int64_t min_users = 10000;
  int64_t max_users = 30000;
  double min_p = 0.5;
  double max_p = 0.9;
  std::vector<int> checkpoints = {1, 2, 3, 4, 5, 6, 7, 14, 21};
  uint64_t seed = 1;

  // Throws kInvalidArgument on invalid mixture or range parameters.
  void Validate() const;
};

nlohmann::json CorpusSpecToJson(const CorpusSpec& spec);
// Absent keys keep the defaults; "seed" is required.
CorpusSpec CorpusSpecFromJson(const nlohmann::json& j);

struct CorpusExperimentTruth {
  std::string experiment_id;
  int64_t n_users = 0;
  double p = 0.0;
  bool h1_x = false;
  bool h1_y = false;
  double lift_x = 0.0;
  double lift_y = 0.0;
};

struct Corpus {
  CorpusSpec spec;
  SummaryStore store;
  // Pearson correlation of per-user X and Y totals, control users of every
  // experiment's last checkpoint pooled.
  double rho_observed = 0.0;
  std::vector<CorpusExperimentTruth> truth;
};

// Deterministic in the spec.
Corpus GenerateCorpus(const CorpusSpec& spec);

nlohmann::json CorpusTruthToJson(const Corpus& corpus);
// {"<x>|<y>": rho} as read by the meta-analysis.
nlohmann::json CorpusCorrelationsToJson(const Corpus& corpus);

}  // namespace expdiag

#endif  // EXPDIAG_CORPUS_H_
