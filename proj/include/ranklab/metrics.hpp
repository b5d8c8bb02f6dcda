/*
 * Copyright 2026 The ranklab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cstddef>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "ranklab/common.hpp"

namespace ranklab {

/// One scored example: candidate indices best-first plus the positive set.
struct RankedExample {
  std::vector<std::size_t> ranking;
  std::set<std::size_t> positives;
};

/// Recall at k in a pool of c candidates. With a single positive this is the
/// usual binary hit indicator; with several, credit is
/// |positives in top-k| / min(k, |positives|).
inline double recall_at_k(const RankedExample& ex, std::size_t c,
                          std::size_t k) {
  check_config(k >= 1 && k <= c, "recall: k=", k,
               " must be in [1, pool size c=", c, "]");
  check(ex.ranking.size() == c, "recall: ranking has ", ex.ranking.size(),
        " entries for pool size ", c);
  check(!ex.positives.empty(), "recall: no positives");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i)
    if (ex.positives.count(ex.ranking[i])) ++hits;
  return static_cast<double>(hits) /
         static_cast<double>(std::min(k, ex.positives.size()));
}

/// Reciprocal rank of the highest-ranked positive (ranks are 1-based).
inline double reciprocal_rank(const RankedExample& ex) {
  for (std::size_t i = 0; i < ex.ranking.size(); ++i)
    if (ex.positives.count(ex.ranking[i]))
      return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

/// Average precision over all positives.
inline double average_precision(const RankedExample& ex) {
  check(!ex.positives.empty(), "average_precision: no positives");
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ex.ranking.size(); ++i) {
    if (!ex.positives.count(ex.ranking[i])) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return ap / static_cast<double>(ex.positives.size());
}

inline double precision_at_1(const RankedExample& ex) {
  check(!ex.ranking.empty(), "p@1: empty ranking");
  return ex.positives.count(ex.ranking[0]) ? 1.0 : 0.0;
}

/// Aggregates over an evaluation run. Values are all in [0, 1] and R_c@k is
/// non-decreasing in k. Examples without positives are skipped and counted.
struct RankingMetrics {
  struct RecallEntry {
    std::size_t c = 0;
    std::size_t k = 0;
    double value = 0.0;
  };
  std::vector<RecallEntry> recalls;
  double mrr = 0.0;
  double map = 0.0;
  double p_at_1 = 0.0;
  std::size_t n_examples = 0;
  std::size_t skipped_no_positive = 0;

  double recall(std::size_t c, std::size_t k) const {
    for (const auto& r : recalls)
      if (r.c == c && r.k == k) return r.value;
    throw ContractError(detail::concat("metrics: no R_", c, "@", k,
                                       " was computed"));
  }
};

/// Computes R_c@k for every requested k (pool size c taken from each
/// example's ranking length, which must be uniform), plus MRR, MAP and P@1.
inline RankingMetrics compute_metrics(const std::vector<RankedExample>& examples,
                                      const std::vector<std::size_t>& ks = {1, 2,
                                                                            5}) {
  RankingMetrics m;
  std::vector<double> recall_sums(ks.size(), 0.0);
  std::size_t c = 0;
  for (const auto& ex : examples) {
    if (ex.positives.empty()) {
      ++m.skipped_no_positive;
      continue;
    }
    if (c == 0) c = ex.ranking.size();
    check(ex.ranking.size() == c, "metrics: mixed pool sizes ", c, " and ",
          ex.ranking.size());
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (ks[i] <= c) recall_sums[i] += recall_at_k(ex, c, ks[i]);
    m.mrr += reciprocal_rank(ex);
    m.map += average_precision(ex);
    m.p_at_1 += precision_at_1(ex);
    ++m.n_examples;
  }
  check(m.n_examples > 0, "metrics: no scorable examples");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] > c) continue;
    m.recalls.push_back(
        {c, ks[i], recall_sums[i] / static_cast<double>(m.n_examples)});
  }
  const double n = static_cast<double>(m.n_examples);
  m.mrr /= n;
  m.map /= n;
  m.p_at_1 /= n;
  return m;
}

inline void print_metrics(const RankingMetrics& m, std::ostream& os) {
  for (const auto& r : m.recalls)
    os << "R_" << r.c << "@" << r.k << "=" << r.value << " ";
  os << "MRR=" << m.mrr << " MAP=" << m.map << " P@1=" << m.p_at_1
     << " n=" << m.n_examples;
  if (m.skipped_no_positive)
    os << " skipped_no_positive=" << m.skipped_no_positive;
  os << "\n";
}

} // namespace ranklab
