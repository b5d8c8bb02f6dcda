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
#include <chrono>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ranklab/common.hpp"
#include "ranklab/masks.hpp"
#include "ranklab/paradigms.hpp"

namespace ranklab {

/// Wall-clock comparison of the four paradigms over identical inputs and
/// shared weights, single-threaded, batch of one context per measurement.
/// Timings are per ranked context; pair counts come from the analytic cost
/// model (candidate tokens only, the [CLS]/[SEP] overhead is excluded there).
struct BenchConfig {
  std::vector<Paradigm> paradigms{Paradigm::Uni, Paradigm::Cross, Paradigm::Bi,
                                  Paradigm::Poly};
  std::vector<int> pool_sizes{10, 20, 50, 100};
  int context_len = 256; // context tokens including the speaker mark
  int cand_len = 32;     // tokens per candidate
  int repeats = 10;
  int warmup = 3; // excluded iterations before timing
  int layers = 2;
  int heads = 4;
  int model_dim = 64;
  int ff_dim = 256;
  int poly_codes = 4;
  std::uint64_t seed = 7;

  void validate() const {
    check_config(!paradigms.empty() && !pool_sizes.empty(),
                 "bench: nothing to measure");
    check_config(context_len >= 2 && cand_len >= 1, "bench: bad geometry");
    check_config(repeats >= 1 && warmup >= 3,
                 "bench: need repeats >= 1 and warmup >= 3");
    for (int m : pool_sizes)
      check_config(m >= 1, "bench: pool sizes must be >= 1");
  }
};

struct BenchRow {
  Paradigm paradigm = Paradigm::Uni;
  int pool_size = 0;
  int context_len = 0;
  int cand_len = 0;
  int batch_size = 1;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t encoder_passes = 0; // per ranked context
  std::uint64_t pair_count = 0;   // analytic attention-pair model
  int repeats = 0;
  bool repeats_enlarged = false;
};

namespace detail {

inline Dialogue bench_dialogue(const Vocab& v, Rng& rng, int context_len,
                               int cand_len, int pool) {
  std::uniform_int_distribution<int> pick(Vocab::kNumReserved,
                                          static_cast<int>(v.size()) - 1);
  auto text = [&](int n) {
    std::string t;
    for (int i = 0; i < n; ++i) {
      if (i) t += ' ';
      t += v.token(pick(rng));
    }
    return t;
  };
  Dialogue d;
  d.context.push_back({1, text(context_len - 1)}); // +1 speaker mark
  for (int i = 0; i < pool; ++i) d.candidates.push_back(text(cand_len));
  return d;
}

inline std::uint64_t bench_pair_count(Paradigm p, std::uint64_t lc,
                                      std::uint64_t lr, std::uint64_t m) {
  switch (p) {
    case Paradigm::Uni: return allowed_pairs(MaskKind::Arrow, lc, lr, m);
    case Paradigm::Cross: return cross_passes_pairs(lc, lr, m);
    case Paradigm::Bi: return allowed_pairs(MaskKind::Diagonal, lc, lr, m);
    case Paradigm::Poly: return allowed_pairs(MaskKind::LightArrow, lc, lr, m);
  }
  return 0;
}

} // namespace detail

/// Runs the paradigm x pool-size grid. If the timer cannot resolve a
/// configured case (median under 100 microseconds), the repeat count is
/// enlarged automatically and flagged in the report.
inline std::vector<BenchRow> latency_bench(const BenchConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int max_pool =
      *std::max_element(cfg.pool_sizes.begin(), cfg.pool_sizes.end());

  Vocab vocab;
  for (int i = 0; i < 500; ++i) vocab.add("b" + std::to_string(i));
  EncoderConfig enc_cfg;
  enc_cfg.layers = cfg.layers;
  enc_cfg.heads = cfg.heads;
  enc_cfg.model_dim = cfg.model_dim;
  enc_cfg.ff_dim = cfg.ff_dim;
  enc_cfg.vocab_size = static_cast<int>(vocab.size());
  enc_cfg.max_len = cfg.context_len + max_pool * (cfg.cand_len + 2) + 2;
  ModelParams params = ModelParams::init(enc_cfg, rng, cfg.poly_codes);
  Encoder enc;

  std::vector<BenchRow> rows;
  for (int pool : cfg.pool_sizes) {
    // One shared input per pool size so every paradigm ranks the same thing.
    Dialogue d = detail::bench_dialogue(vocab, rng, cfg.context_len,
                                        cfg.cand_len, pool);
    for (Paradigm p : cfg.paradigms) {
      ScorerOptions opt;
      opt.max_len = static_cast<std::size_t>(enc_cfg.max_len);
      opt.poly_codes = cfg.poly_codes;
      auto run_once = [&]() {
        Graph g(false);
        Tensor logits = score_dialogue(g, p, enc, params, d, vocab, opt);
        return logits.data()[0]; // keep the result alive
      };
      volatile double sink = 0.0;
      for (int w = 0; w < cfg.warmup; ++w) sink = sink + run_once();

      int repeats = cfg.repeats;
      bool enlarged = false;
      std::vector<double> ms;
      for (;;) {
        ms.clear();
        ms.reserve(static_cast<std::size_t>(repeats));
        enc.reset_pass_count();
        for (int r = 0; r < repeats; ++r) {
          const auto t0 = std::chrono::steady_clock::now();
          sink = sink + run_once();
          const auto t1 = std::chrono::steady_clock::now();
          ms.push_back(
              std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(ms.begin(), ms.end());
        if (ms[ms.size() / 2] >= 0.1 || repeats >= 512) break;
        repeats *= 4; // timer resolution too coarse for this case
        enlarged = true;
      }
      BenchRow row;
      row.paradigm = p;
      row.pool_size = pool;
      row.context_len = cfg.context_len;
      row.cand_len = cfg.cand_len;
      row.mean_ms = 0.0;
      for (double v : ms) row.mean_ms += v;
      row.mean_ms /= static_cast<double>(ms.size());
      row.median_ms = ms[ms.size() / 2];
      row.p95_ms = ms[std::min(ms.size() - 1,
                               static_cast<std::size_t>(0.95 * ms.size()))];
      row.encoder_passes = enc.pass_count() / static_cast<std::size_t>(repeats);
      row.pair_count = detail::bench_pair_count(
          p, static_cast<std::uint64_t>(cfg.context_len),
          static_cast<std::uint64_t>(cfg.cand_len),
          static_cast<std::uint64_t>(pool));
      row.repeats = repeats;
      row.repeats_enlarged = enlarged;
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_bench_csv(const std::vector<BenchRow>& rows,
                            std::ostream& os) {
  os << "paradigm,pool_size,context_len,cand_len,batch_size,mean_ms,"
        "median_ms,p95_ms,encoder_passes,pair_count,repeats,"
        "repeats_enlarged\n";
  for (const auto& r : rows) {
    os << to_string(r.paradigm) << "," << r.pool_size << "," << r.context_len
       << "," << r.cand_len << "," << r.batch_size << "," << r.mean_ms << ","
       << r.median_ms << "," << r.p95_ms << "," << r.encoder_passes << ","
       << r.pair_count << "," << r.repeats << ","
       << (r.repeats_enlarged ? 1 : 0) << "\n";
  }
}

inline std::string format_bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "paradigm" << std::right << std::setw(6)
     << "M" << std::setw(6) << "L_c" << std::setw(6) << "L_r" << std::setw(12)
     << "mean_ms" << std::setw(12) << "median_ms" << std::setw(12) << "p95_ms"
     << std::setw(8) << "passes" << std::setw(14) << "pairs" << std::setw(9)
     << "repeats" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(8) << to_string(r.paradigm) << std::right
       << std::setw(6) << r.pool_size << std::setw(6) << r.context_len
       << std::setw(6) << r.cand_len << std::setw(12) << std::fixed
       << std::setprecision(3) << r.mean_ms << std::setw(12) << r.median_ms
       << std::setw(12) << r.p95_ms << std::setw(8) << r.encoder_passes
       << std::setw(14) << r.pair_count << std::setw(9) << r.repeats
       << (r.repeats_enlarged ? "  (enlarged)" : "") << "\n";
  }
  return os.str();
}

} // namespace ranklab
