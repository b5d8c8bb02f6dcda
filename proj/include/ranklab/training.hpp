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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ranklab/checkpoint.hpp"
#include "ranklab/common.hpp"
#include "ranklab/data.hpp"
#include "ranklab/encoder.hpp"
#include "ranklab/metrics.hpp"
#include "ranklab/paradigms.hpp"
#include "ranklab/tensor.hpp"

namespace ranklab {

struct OptimConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 0.01;
  double peak_lr = 2e-4;
  double eps = 1e-8;
  int warmup_steps = 1000;

  void validate() const {
    check_config(0.0 < beta1 && beta1 < beta2 && beta2 < 1.0,
                 "optim: need 0 < beta1 < beta2 < 1, got ", beta1, ", ",
                 beta2);
    check_config(peak_lr > 0.0 && eps > 0.0 && warmup_steps >= 1,
                 "optim: bad peak_lr/eps/warmup");
    check_config(weight_decay >= 0.0, "optim: negative weight decay");
  }
};

/// lr(step) = peak_lr * sqrt(warmup) * min(step^-1/2, step * warmup^-3/2);
/// rises linearly to peak_lr at step == warmup, then decays as step^-1/2.
inline double noam_lr(std::size_t step, std::size_t warmup, double peak_lr) {
  check(step >= 1, "noam_lr: step must be >= 1");
  check(warmup >= 1, "noam_lr: warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return peak_lr * std::sqrt(w) *
         std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

/// Adam with decoupled weight decay; lr supplied per step by the schedule.
class AdamW {
public:
  AdamW(std::vector<Tensor> params, OptimConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), 0.0);
      v_[i].assign(params_[i].size(), 0.0);
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      Tensor& param = params_[p];
      if (!param.has_grad()) continue;
      auto w = param.data();
      auto g = param.grad();
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                      cfg_.weight_decay * w[i]);
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

private:
  std::vector<Tensor> params_;
  OptimConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Mean cross-entropy of per-example candidate scores (B x M) against the
/// positive indices.
inline Tensor multi_choice_loss(Graph& g, const Tensor& scores,
                                const std::vector<int>& labels) {
  check(scores.rows() == labels.size(), "multi_choice_loss: ", labels.size(),
        " labels for ", scores.rows(), " score rows");
  for (int l : labels)
    check(l >= 0 && static_cast<std::size_t>(l) < scores.cols(),
          "multi_choice_loss: label ", l, " out of range");
  return cross_entropy(g, scores, labels);
}

/// A masked-language corruption of one assembled row: targets[i] is the
/// original token at the corrupted position i, or -1 elsewhere.
struct MlmCorruption {
  std::vector<int> corrupted_ids;
  std::vector<int> targets;
  std::size_t selected = 0;
};

/// Select each eligible position with probability `rate`; replace it with
/// [MASK] 80% of the time, a random non-reserved token 10%, and keep it 10%.
/// Reserved tokens and padding are never selected.
inline MlmCorruption mlm_corrupt(const EncodedRow& row, double rate, Rng& rng,
                                 const Vocab& vocab) {
  check(rate > 0.0 && rate < 1.0, "mlm_corrupt: rate must be in (0,1), got ",
        rate);
  check(vocab.size() > static_cast<std::size_t>(Vocab::kNumReserved),
        "mlm_corrupt: vocab has no maskable tokens");
  MlmCorruption out;
  out.corrupted_ids = row.token_ids;
  out.targets.assign(row.seq_len(), -1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> random_token(
      Vocab::kNumReserved, static_cast<int>(vocab.size()) - 1);
  for (std::size_t i = 0; i < row.seq_len(); ++i) {
    if (row.pad_mask[i] || Vocab::is_reserved(row.token_ids[i])) continue;
    if (unit(rng) >= rate) continue;
    out.targets[i] = row.token_ids[i];
    ++out.selected;
    const double roll = unit(rng);
    if (roll < 0.8) {
      out.corrupted_ids[i] = Vocab::kMask;
    } else if (roll < 0.9) {
      out.corrupted_ids[i] = random_token(rng);
    } // else: keep the original token
  }
  return out;
}

/// classification + weight * mlm (the spec'd combined objective).
inline Tensor total_loss(Graph& g, const Tensor& classification,
                         const std::optional<Tensor>& mlm,
                         double mlm_weight = 1.0) {
  if (!mlm || mlm_weight == 0.0) return classification;
  return add(g, classification, scale(g, *mlm, mlm_weight));
}

/// Raised when training diverges; carries the diagnostics the spec asks for.
class TrainingDiverged : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  Paradigm paradigm = Paradigm::Uni;
  PositionScheme scheme = PositionScheme::Repeated;
  int batch_size = 8; // K context-response pairs -> K-way multi-choice
  int epochs = 10;
  int max_steps = 0;  // 0 = bounded by epochs only
  double mlm_rate = 0.15;
  double mlm_weight = 1.0;
  int patience = 3;   // evaluations without R@1 improvement before stopping
  int poly_codes = 4;
  bool context_sees_candidates = true;
  std::uint64_t seed = 42;
  std::size_t max_len = 512;
  std::string out_dir;
};

struct EvalLogEntry {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double cls_loss = 0.0;
  double mlm_loss = 0.0;
  double r_at_1 = 0.0;
  double mrr = 0.0;
};

struct TrainResult {
  std::vector<EvalLogEntry> log;
  double best_r1 = 0.0;
  std::size_t best_step = 0;
  std::size_t steps = 0;
  std::string checkpoint_path; // empty when out_dir unset
};

/// Scores every labeled record and aggregates ranking metrics.
inline RankingMetrics evaluate_records(const Encoder& enc,
                                       const ModelParams& params,
                                       const std::vector<CorpusRecord>& records,
                                       const Vocab& vocab, Paradigm paradigm,
                                       const ScorerOptions& base_opt = {},
                                       const std::vector<std::size_t>& ks = {
                                           1, 2, 5}) {
  std::vector<RankedExample> ranked;
  ranked.reserve(records.size());
  for (const auto& rec : records) {
    Graph g(false);
    ScorerOptions opt = base_opt;
    opt.train = false;
    opt.want_mlm = false;
    Tensor logits =
        score_dialogue(g, paradigm, enc, params, rec.dialogue, vocab, opt);
    auto sv = to_score_vector(logits);
    RankedExample ex;
    ex.ranking = rank(sv.scores);
    if (rec.dialogue.positive_index)
      ex.positives.insert(static_cast<std::size_t>(*rec.dialogue.positive_index));
    ranked.push_back(std::move(ex));
  }
  return compute_metrics(ranked, ks);
}

/// In-batch validation: groups of K single-candidate records become K-way
/// problems whose candidate pool is the group's positives; returns mean R@1
/// and MRR over all problems.
inline std::pair<double, double> evaluate_in_batch(
    const Encoder& enc, const ModelParams& params,
    const std::vector<CorpusRecord>& records, const Vocab& vocab,
    Paradigm paradigm, int k_pool, const ScorerOptions& base_opt = {}) {
  double r1 = 0.0, mrr = 0.0;
  std::size_t n = 0;
  for (std::size_t start = 0; start + k_pool <= records.size();
       start += k_pool) {
    std::vector<std::string> pool;
    bool skip = false;
    for (int i = 0; i < k_pool; ++i) {
      const auto& d = records[start + static_cast<std::size_t>(i)].dialogue;
      check(d.positive_index.has_value(), "validation record lacks a label");
      const std::string& pos =
          d.candidates[static_cast<std::size_t>(*d.positive_index)];
      if (std::find(pool.begin(), pool.end(), pos) != pool.end()) skip = true;
      pool.push_back(pos);
    }
    if (skip) continue; // duplicate positives break the one-positive contract
    for (int i = 0; i < k_pool; ++i) {
      Dialogue d = records[start + static_cast<std::size_t>(i)].dialogue;
      d.candidates = pool;
      d.positive_index = i;
      Graph g(false);
      ScorerOptions opt = base_opt;
      opt.train = false;
      opt.want_mlm = false;
      Tensor logits = score_dialogue(g, paradigm, enc, params, d, vocab, opt);
      auto order = rank(to_score_vector(logits).scores);
      RankedExample ex;
      ex.ranking = order;
      ex.positives = {static_cast<std::size_t>(i)};
      r1 += recall_at_k(ex, pool.size(), 1);
      mrr += reciprocal_rank(ex);
      ++n;
    }
  }
  check(n > 0, "validation: no complete batches");
  return {r1 / static_cast<double>(n), mrr / static_cast<double>(n)};
}

/// One optimization step over a batch of K training dialogues (each already
/// carrying the shared candidate pool and its own label). Returns
/// (total, classification, mlm) losses.
struct StepLosses {
  double total = 0.0, cls = 0.0, mlm = 0.0;
};

inline StepLosses train_step(Graph& g, const Encoder& enc, ModelParams& params,
                             const std::vector<Dialogue>& batch,
                             const Vocab& vocab, const TrainConfig& cfg,
                             Rng& rng, AdamW& optim, double lr) {
  const bool want_mlm = cfg.mlm_weight > 0.0 && cfg.mlm_rate > 0.0;
  ScorerOptions opt;
  opt.scheme = cfg.scheme;
  opt.max_len = cfg.max_len;
  opt.context_sees_candidates = cfg.context_sees_candidates;
  opt.poly_codes = cfg.poly_codes;
  opt.train = true;
  opt.rng = &rng;
  opt.want_mlm = want_mlm;

  std::vector<Tensor> score_rows;
  std::vector<int> labels;
  std::vector<Tensor> mlm_losses;
  for (const Dialogue& d : batch) {
    check(d.positive_index.has_value(), "train: unlabeled dialogue");
    // Corrupt every pass's input in place; classification and masked-LM
    // prediction then share the same forward.
    std::vector<std::vector<int>> pass_targets;
    if (want_mlm) {
      opt.row_hook = [&](EncodedRow& row) {
        MlmCorruption corr = mlm_corrupt(row, cfg.mlm_rate, rng, vocab);
        row.token_ids = corr.corrupted_ids;
        pass_targets.push_back(corr.selected ? corr.targets
                                             : std::vector<int>{});
      };
    }
    ScoreDetail detail;
    Tensor logits = score_dialogue(g, cfg.paradigm, enc, params, d, vocab, opt,
                                   &detail);
    score_rows.push_back(transpose(g, logits)); // 1 x M
    labels.push_back(*d.positive_index);
    if (want_mlm) {
      check(pass_targets.size() == detail.mlm_logits.size(),
            "train: pass/target bookkeeping mismatch");
      for (std::size_t i = 0; i < pass_targets.size(); ++i) {
        if (pass_targets[i].empty()) continue;
        mlm_losses.push_back(
            cross_entropy(g, detail.mlm_logits[i], pass_targets[i]));
      }
    }
  }
  Tensor scores = concat_rows(g, score_rows); // B x M
  Tensor cls = multi_choice_loss(g, scores, labels);
  std::optional<Tensor> mlm;
  if (!mlm_losses.empty()) {
    Tensor acc = mlm_losses[0];
    for (std::size_t i = 1; i < mlm_losses.size(); ++i)
      acc = add(g, acc, mlm_losses[i]);
    mlm = scale(g, acc, 1.0 / static_cast<double>(mlm_losses.size()));
  }
  Tensor loss = total_loss(g, cls, mlm, cfg.mlm_weight);

  if (std::isnan(loss.item())) {
    throw TrainingDiverged(detail::concat(
        "training diverged: NaN loss at optimizer step ",
        optim.steps_taken() + 1, ", lr=", lr));
  }
  params.zero_grads();
  g.backward(loss);
  double grad_norm_sq = 0.0;
  for (auto& t : params.all())
    for (double gv : t.grad()) grad_norm_sq += gv * gv;
  if (std::isnan(grad_norm_sq)) {
    throw TrainingDiverged(detail::concat(
        "training diverged: NaN gradients at optimizer step ",
        optim.steps_taken() + 1, ", lr=", lr,
        ", |grad|^2=", grad_norm_sq));
  }
  optim.step(lr);
  StepLosses out;
  out.total = loss.item();
  out.cls = cls.item();
  out.mlm = mlm ? mlm->item() : 0.0;
  return out;
}

/// Full training loop with in-batch negatives: each batch of K labeled pairs
/// becomes K problems over the batch's K positives. Validates with in-batch
/// pools each epoch, keeps the best checkpoint by validation R@1, stops
/// early after `patience` evaluations without improvement.
inline TrainResult train(const EncoderConfig& enc_cfg, const OptimConfig& optim_cfg,
                         const TrainConfig& cfg,
                         const std::vector<CorpusRecord>& train_records,
                         const std::vector<CorpusRecord>& valid_records,
                         const Vocab& vocab, ModelParams* inout_params = nullptr,
                         std::ostream* metrics_log = nullptr) {
  enc_cfg.validate();
  optim_cfg.validate();
  check_config(!train_records.empty(), "train: empty training corpus");
  check_config(cfg.batch_size >= 2, "train: batch_size must be >= 2");
  Rng rng(cfg.seed);
  ModelParams fresh =
      inout_params ? *inout_params
                   : ModelParams::init(enc_cfg, rng,
                                       cfg.paradigm == Paradigm::Poly
                                           ? cfg.poly_codes
                                           : 0);
  ModelParams& params = inout_params ? *inout_params : fresh;
  if (cfg.paradigm == Paradigm::Poly)
    check(params.poly_codes.defined(), "train: poly paradigm needs codes");
  Encoder enc;
  AdamW optim(params.all(), optim_cfg);

  TrainResult result;
  std::vector<std::pair<std::string, Tensor>> best_snapshot;
  int evals_since_improvement = 0;
  std::size_t step = 0;
  bool stop = false;

  std::vector<std::size_t> order(train_records.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t k = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    StepLosses last{};
    for (std::size_t start = 0; start + k <= order.size() && !stop;
         start += k) {
      // Assemble the shared candidate pool from the batch's positives.
      std::vector<std::string> pool;
      bool dup = false;
      for (std::size_t i = 0; i < k; ++i) {
        const auto& d = train_records[order[start + i]].dialogue;
        check(d.positive_index.has_value(), "train: unlabeled record");
        const std::string& pos =
            d.candidates[static_cast<std::size_t>(*d.positive_index)];
        if (std::find(pool.begin(), pool.end(), pos) != pool.end()) dup = true;
        pool.push_back(pos);
      }
      if (dup) continue; // two identical positives would break the labels
      std::vector<Dialogue> batch;
      for (std::size_t i = 0; i < k; ++i) {
        Dialogue d = train_records[order[start + i]].dialogue;
        d.candidates = pool;
        d.positive_index = static_cast<int>(i);
        batch.push_back(std::move(d));
      }
      ++step;
      const double lr = noam_lr(step, static_cast<std::size_t>(
                                          optim_cfg.warmup_steps),
                                optim_cfg.peak_lr);
      Graph g;
      last = train_step(g, enc, params, batch, vocab, cfg, rng, optim, lr);
      if (cfg.max_steps > 0 &&
          step >= static_cast<std::size_t>(cfg.max_steps))
        stop = true;
    }
    // End-of-epoch evaluation with in-batch negatives.
    if (valid_records.size() >= k) {
      auto [r1, mrr] = evaluate_in_batch(enc, params, valid_records, vocab,
                                         cfg.paradigm, cfg.batch_size,
                                         {cfg.scheme, cfg.max_len,
                                          cfg.context_sees_candidates,
                                          cfg.poly_codes});
      EvalLogEntry e;
      e.step = step;
      e.lr = noam_lr(std::max<std::size_t>(step, 1),
                     static_cast<std::size_t>(optim_cfg.warmup_steps),
                     optim_cfg.peak_lr);
      e.loss = last.total;
      e.cls_loss = last.cls;
      e.mlm_loss = last.mlm;
      e.r_at_1 = r1;
      e.mrr = mrr;
      result.log.push_back(e);
      if (metrics_log) {
        *metrics_log << "step=" << e.step << " lr=" << e.lr
                     << " loss=" << e.loss << " cls=" << e.cls_loss
                     << " mlm=" << e.mlm_loss << " r1=" << e.r_at_1
                     << " mrr=" << e.mrr << "\n";
        metrics_log->flush();
      }
      if (r1 > result.best_r1 || result.log.size() == 1) {
        result.best_r1 = r1;
        result.best_step = step;
        best_snapshot.clear();
        for (auto& [name, t] : params.named())
          best_snapshot.emplace_back(name, t.clone());
        evals_since_improvement = 0;
      } else if (++evals_since_improvement >= cfg.patience) {
        stop = true;
      }
    }
  }
  result.steps = step;

  // Restore the best weights into params.
  if (!best_snapshot.empty()) {
    auto named = params.named();
    check(named.size() == best_snapshot.size(), "train: snapshot mismatch");
    for (std::size_t i = 0; i < named.size(); ++i)
      std::copy(best_snapshot[i].second.data().begin(),
                best_snapshot[i].second.data().end(),
                named[i].second.data().begin());
  }
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::string path =
        (std::filesystem::path(cfg.out_dir) / "model.ckpt").string();
    save_checkpoint(path, params.named());
    result.checkpoint_path = path;
  }
  return result;
}

} // namespace ranklab
