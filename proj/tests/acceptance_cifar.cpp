/* Copyright (c) 2026 The AggSS Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// CIFAR-scale acceptance checks. They need the CIFAR-10 and CIFAR-100 binary
// archives unpacked below AGGSS_DATASETS_DIR (default <source>/data) and
// report FAIL naming the missing path otherwise.

#include <algorithm>
#include <map>

#include "acceptance_common.hpp"
#include "aggss/eval.hpp"
#include "aggss/trainer.hpp"

namespace aggss::acceptance {
namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void criteria_8_and_9(Verdicts& v) {
  const ExperimentConfig cfg = local_config("cifar10_aggss.conf");
  std::string reason;
  const auto ds = try_load(cfg.dataset, reason);
  if (!ds) {
    v.record(8, "AggSS vs CE gap", false, "not run: " + reason);
    v.record(9, "rotation ablation trend", false, "not run: " + reason);
    return;
  }
  Stopwatch clock;
  const std::vector<int> counts{1, 2, 4};
  std::map<int, std::vector<double>> acc;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    ExperimentConfig run = cfg;
    run.seed = seed;
    run.resolve();
    for (const auto& row : rotation_ablation(*ds, run.model, counts, run.train)) {
      acc[row.transforms].push_back(row.accuracy);
      std::printf("  seed %llu M=%d accuracy %.2f\n", static_cast<unsigned long long>(seed), row.transforms,
                  row.accuracy);
      std::fflush(stdout);
    }
  }
  const double m1 = median(acc[1]), m2 = median(acc[2]), m4 = median(acc[4]);
  v.record(8, "AggSS vs CE gap", m4 - m1 >= 1.0,
           fmt("median M=4 %.2f vs M=1 %.2f, gap %.2f >= 1.00, %.0f s", m4, m1, m4 - m1, clock.seconds()));
  v.record(9, "rotation ablation trend", m4 > m1 && m2 >= m1 - 0.3,
           fmt("median accuracy M=1 %.2f, M=2 %.2f, M=4 %.2f", m1, m2, m4));
}

void criterion_10(Verdicts& v) {
  const ExperimentConfig cfg = local_config("cifar100_subset_smoke.conf");
  std::string reason;
  auto ds = try_load(cfg.dataset, reason);
  if (!ds) {
    v.record(10, "incremental smoke with forgetting mitigation", false, "not run: " + reason);
    return;
  }
  restrict_classes(*ds, cfg.dataset.max_classes);
  Stopwatch clock;
  const TaskStream stream = build_stream(cfg, *ds);
  const RunRecord full = run_experiment(stream, *ds, cfg.model, cfg.train, make_plugins(cfg));
  TrainConfig bare = cfg.train;
  bare.exemplar_budget = 0;
  const RunRecord plain = run_experiment(stream, *ds, cfg.model, bare, {});
  const bool complete = full.accuracy.rows() == 3 && plain.accuracy.rows() == 3;
  const double with = full.average_incremental_accuracy, without = plain.average_incremental_accuracy;
  v.record(10, "incremental smoke with forgetting mitigation", complete && with >= without,
           fmt("3-checkpoint matrix, AIA with distillation + buffer %.2f vs bare %.2f, %.0f s", with, without,
               clock.seconds()));
}

}  // namespace
}  // namespace aggss::acceptance

int main() {
  using namespace aggss::acceptance;
  Verdicts v;
  criteria_8_and_9(v);
  criterion_10(v);
  return v.exit_code();
}
