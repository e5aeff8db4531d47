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

#ifndef EXPDIAG_TESTS_TEST_UTIL_H_
#define EXPDIAG_TESTS_TEST_UTIL_H_

#include <functional>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "expdiag/datamodel.h"
#include "expdiag/error.h"
#include "expdiag/stats.h"
#include "expdiag/store.h"

namespace expdiag {

inline void ExpectErrorCode(const std::function<void()>& fn, ErrorCode code) {
  try {
    fn();
    ADD_FAILURE() << "expected error " << ErrorCodeName(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

inline void AddValue(RangeSummary& s, double v) {
  ++s.n;
  s.sum += v;
  s.sum_sq += v * v;
}

inline RangeSummary Summarize(const std::vector<double>& values) {
  RangeSummary s;
  for (double v : values) AddValue(s, v);
  return s;
}

// Normalized effects from the two-group model with N_e uniform on
// [1000, 20000].
inline std::vector<NormalizedEffect> PlantedTwoGroup(double pi1, double v,
                                                     int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ne(1000.0, 20000.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  std::vector<NormalizedEffect> out;
  for (int i = 0; i < n; ++i) {
    const double n_e = ne(rng);
    const bool h1 = u(rng) < pi1;
    const double sd = std::sqrt(1.0 / n_e + (h1 ? v * v : 0.0));
    out.push_back({sd * z(rng), n_e});
  }
  return out;
}

inline ExperimentConfig TwoArmConfig(const std::string& id = "exp") {
  ExperimentConfig c;
  c.experiment_id = id;
  c.hash_id = "h";
  c.variants = {{"control", 0.5}, {"treatment", 0.5}};
  return c;
}

inline ExposureEvent Exposure(const std::string& user, int day,
                              const std::string& variant,
                              const std::string& exp = "exp") {
  return ExposureEvent{user, exp, variant, day, std::nullopt};
}

inline MetricEvent Metric(const std::string& user, int day,
                          const std::string& metric, double value) {
  return MetricEvent{user, day, metric, value, std::nullopt};
}

}  // namespace expdiag

#endif  // EXPDIAG_TESTS_TEST_UTIL_H_
