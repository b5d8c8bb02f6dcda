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

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ranklab/common.hpp"
#include "ranklab/inputs.hpp"
#include "ranklab/masks.hpp"
#include "ranklab/tensor.hpp"

namespace ranklab {

enum class Aggregation { AvgTokens, Cls };

inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "avg") return Aggregation::AvgTokens;
  if (s == "cls") return Aggregation::Cls;
  throw ConfigError("unknown aggregation '" + s + "' (expected avg|cls)");
}

inline const char* to_string(Aggregation a) {
  return a == Aggregation::AvgTokens ? "avg" : "cls";
}

struct EncoderConfig {
  int layers = 2;
  int heads = 4;
  int model_dim = 64;
  int ff_dim = 256;
  int max_len = 512;
  int vocab_size = 0;
  double dropout = 0.0;
  Aggregation aggregation = Aggregation::AvgTokens;
  /// Whether [CLS]/[SEP] positions take part in the average aggregation.
  bool average_includes_special = true;

  void validate() const {
    check_config(layers >= 1, "encoder: layers must be >= 1");
    check_config(heads >= 1 && model_dim % heads == 0,
                 "encoder: model_dim ", model_dim,
                 " must be divisible by heads ", heads);
    check_config(ff_dim >= 1 && max_len >= 2, "encoder: bad ff_dim/max_len");
    check_config(vocab_size > Vocab::kNumReserved,
                 "encoder: vocab_size must exceed the reserved tokens, got ",
                 vocab_size);
    check_config(dropout >= 0.0 && dropout < 1.0, "encoder: bad dropout rate");
  }
};

struct LayerParams {
  // Attention projections. The key projection carries no bias: a shared key
  // offset shifts every score in a row equally and softmax cancels it.
  Tensor wq, bq, wk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b;                   // post-attention layernorm
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;     // feed-forward
  Tensor ln2_g, ln2_b;                   // post-ffn layernorm
};

/// All learned tensors plus the config they were shaped by. Weights are
/// normal(0, 0.02), biases zero, layernorm gains one.
struct ModelParams {
  EncoderConfig config;
  Tensor token_emb, pos_emb, seg_emb;
  std::vector<LayerParams> layers;
  Tensor mlm_w, mlm_b;     // model_dim x vocab, vocab
  Tensor score_w, score_b; // model_dim x 1, 1
  Tensor poly_codes;       // m x model_dim; defined only when m > 0

  static ModelParams init(const EncoderConfig& cfg, Rng& rng,
                          int poly_code_count = 0, double init_std = 0.02) {
    cfg.validate();
    const std::size_t d = static_cast<std::size_t>(cfg.model_dim);
    const std::size_t f = static_cast<std::size_t>(cfg.ff_dim);
    const std::size_t v = static_cast<std::size_t>(cfg.vocab_size);
    const double kStd = init_std;
    ModelParams p;
    p.config = cfg;
    p.token_emb = Tensor::randn({v, d}, rng, kStd, true);
    p.pos_emb = Tensor::randn({static_cast<std::size_t>(cfg.max_len), d}, rng,
                              kStd, true);
    p.seg_emb = Tensor::randn({2, d}, rng, kStd, true);
    for (int l = 0; l < cfg.layers; ++l) {
      LayerParams lp;
      lp.wq = Tensor::randn({d, d}, rng, kStd, true);
      lp.bq = Tensor::zeros({1, d}, true);
      lp.wk = Tensor::randn({d, d}, rng, kStd, true);
      lp.wv = Tensor::randn({d, d}, rng, kStd, true);
      lp.bv = Tensor::zeros({1, d}, true);
      lp.wo = Tensor::randn({d, d}, rng, kStd, true);
      lp.bo = Tensor::zeros({1, d}, true);
      lp.ln1_g = Tensor::full({1, d}, 1.0, true);
      lp.ln1_b = Tensor::zeros({1, d}, true);
      lp.ff_w1 = Tensor::randn({d, f}, rng, kStd, true);
      lp.ff_b1 = Tensor::zeros({1, f}, true);
      lp.ff_w2 = Tensor::randn({f, d}, rng, kStd, true);
      lp.ff_b2 = Tensor::zeros({1, d}, true);
      lp.ln2_g = Tensor::full({1, d}, 1.0, true);
      lp.ln2_b = Tensor::zeros({1, d}, true);
      p.layers.push_back(std::move(lp));
    }
    p.mlm_w = Tensor::randn({d, v}, rng, kStd, true);
    p.mlm_b = Tensor::zeros({1, v}, true);
    p.score_w = Tensor::randn({d, 1}, rng, kStd, true);
    p.score_b = Tensor::zeros({1, 1}, true);
    if (poly_code_count > 0)
      p.poly_codes = Tensor::randn(
          {static_cast<std::size_t>(poly_code_count), d}, rng, kStd, true);
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("token_emb", token_emb);
    out.emplace_back("pos_emb", pos_emb);
    out.emplace_back("seg_emb", seg_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& lp = layers[l];
      const std::string pfx = "layer" + std::to_string(l) + ".";
      out.emplace_back(pfx + "wq", lp.wq);
      out.emplace_back(pfx + "bq", lp.bq);
      out.emplace_back(pfx + "wk", lp.wk);
      out.emplace_back(pfx + "wv", lp.wv);
      out.emplace_back(pfx + "bv", lp.bv);
      out.emplace_back(pfx + "wo", lp.wo);
      out.emplace_back(pfx + "bo", lp.bo);
      out.emplace_back(pfx + "ln1_g", lp.ln1_g);
      out.emplace_back(pfx + "ln1_b", lp.ln1_b);
      out.emplace_back(pfx + "ff_w1", lp.ff_w1);
      out.emplace_back(pfx + "ff_b1", lp.ff_b1);
      out.emplace_back(pfx + "ff_w2", lp.ff_w2);
      out.emplace_back(pfx + "ff_b2", lp.ff_b2);
      out.emplace_back(pfx + "ln2_g", lp.ln2_g);
      out.emplace_back(pfx + "ln2_b", lp.ln2_b);
    }
    out.emplace_back("mlm_w", mlm_w);
    out.emplace_back("mlm_b", mlm_b);
    out.emplace_back("score_w", score_w);
    out.emplace_back("score_b", score_b);
    if (poly_codes.defined()) out.emplace_back("poly_codes", poly_codes);
    return out;
  }

  std::vector<Tensor> all() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  void zero_grads() {
    for (auto& t : all()) t.zero_grad();
  }
};

struct EncoderOutput {
  Tensor token_states;                  // T x D
  std::vector<Tensor> candidate_vectors; // one 1 x D per span
  Tensor mlm_logits;                    // T x V, only when requested
};

struct ForwardOptions {
  bool train = false;       // enables dropout
  Rng* rng = nullptr;       // required when train && dropout > 0
  bool want_mlm = false;
};

/// Mean (or [CLS]) aggregation over each candidate span, excluding in-span
/// padding. A fully padded span is a contract violation.
inline std::vector<Tensor> aggregate(Graph& g, const Tensor& token_states,
                                     const std::vector<Span>& spans,
                                     const std::vector<std::uint8_t>& pad_mask,
                                     Aggregation mode,
                                     bool include_special = true) {
  std::vector<Tensor> out;
  out.reserve(spans.size());
  for (const Span& s : spans) {
    check(s.end <= token_states.rows(), "aggregate: span exceeds states");
    if (mode == Aggregation::Cls) {
      out.push_back(mean_rows(g, token_states, {s.begin}));
      continue;
    }
    std::vector<std::size_t> rows;
    std::size_t last_real = s.begin;
    for (std::size_t p = s.begin; p < s.end; ++p)
      if (!pad_mask[p]) last_real = p;
    for (std::size_t p = s.begin; p < s.end; ++p) {
      if (pad_mask[p]) continue;
      if (!include_special && (p == s.begin || p == last_real)) continue;
      rows.push_back(p);
    }
    check(!rows.empty(), "aggregate: span [", s.begin, ", ", s.end,
          ") has no usable positions");
    out.push_back(mean_rows(g, token_states, rows));
  }
  return out;
}

/// Transformer encoder with an injectable attention-mask schedule.
/// Instrumented: every forward() bumps a pass counter, which the scoring
/// paradigms' call-count contracts are tested against.
class Encoder {
public:
  EncoderOutput forward(Graph& g, const ModelParams& params,
                        const EncodedRow& row, const MaskSchedule& schedule,
                        const ForwardOptions& opt = {}) const {
    const EncoderConfig& cfg = params.config;
    const std::size_t t = row.seq_len();
    const std::size_t d = static_cast<std::size_t>(cfg.model_dim);
    const std::size_t heads = static_cast<std::size_t>(cfg.heads);
    const std::size_t dh = d / heads;
    check(t >= 1, "encoder: empty input row");
    check(schedule.layers.size() == static_cast<std::size_t>(cfg.layers),
          "encoder: schedule has ", schedule.layers.size(), " layers, config ",
          cfg.layers);
    for (const auto& m : schedule.layers)
      check(m.rows == t && m.cols == t, "encoder: schedule geometry ", m.rows,
            "x", m.cols, " does not match sequence length ", t);
    check(static_cast<std::size_t>(cfg.max_len) >= t,
          "encoder: sequence length ", t, " exceeds max_len ", cfg.max_len);
    const bool use_dropout = opt.train && cfg.dropout > 0.0;
    check(!use_dropout || opt.rng != nullptr,
          "encoder: dropout requires an rng in train mode");
    ++passes_;

    Tensor x = embeddings(g, params, row);
    if (use_dropout) x = dropout(g, x, cfg.dropout, *opt.rng);

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < cfg.layers; ++l) {
      const LayerParams& lp = params.layers[static_cast<std::size_t>(l)];
      const BoolMatrix eff = effective_mask(schedule.layer(static_cast<std::size_t>(l)), row);
      Tensor q = add_rowvec(g, matmul(g, x, lp.wq), lp.bq);
      Tensor k = matmul(g, x, lp.wk);
      Tensor v = add_rowvec(g, matmul(g, x, lp.wv), lp.bv);
      std::vector<Tensor> head_ctx;
      head_ctx.reserve(heads);
      for (std::size_t h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(g, q, h * dh, dh);
        Tensor kh = slice_cols(g, k, h * dh, dh);
        Tensor vh = slice_cols(g, v, h * dh, dh);
        Tensor scores = scale(g, matmul(g, qh, transpose(g, kh)), inv_sqrt_dh);
        Tensor attn = masked_softmax(g, scores, eff);
        head_ctx.push_back(matmul(g, attn, vh));
      }
      Tensor ctx = concat_cols(g, head_ctx);
      Tensor attn_out = add_rowvec(g, matmul(g, ctx, lp.wo), lp.bo);
      if (use_dropout) attn_out = dropout(g, attn_out, cfg.dropout, *opt.rng);
      x = layer_norm(g, add(g, x, attn_out), lp.ln1_g, lp.ln1_b);
      Tensor ff = add_rowvec(
          g, matmul(g, gelu(g, add_rowvec(g, matmul(g, x, lp.ff_w1), lp.ff_b1)),
                    lp.ff_w2),
          lp.ff_b2);
      if (use_dropout) ff = dropout(g, ff, cfg.dropout, *opt.rng);
      x = layer_norm(g, add(g, x, ff), lp.ln2_g, lp.ln2_b);
    }

    EncoderOutput out;
    out.token_states = x;
    if (!row.candidate_spans.empty())
      out.candidate_vectors =
          aggregate(g, x, row.candidate_spans, row.pad_mask, cfg.aggregation,
                    cfg.average_includes_special);
    if (opt.want_mlm)
      out.mlm_logits = add_rowvec(g, matmul(g, x, params.mlm_w), params.mlm_b);
    return out;
  }

  std::size_t pass_count() const { return passes_; }
  void reset_pass_count() const { passes_ = 0; }

private:
  Tensor embeddings(Graph& g, const ModelParams& params,
                    const EncodedRow& row) const {
    for (int p : row.position_ids)
      check(p >= 0 && p < params.config.max_len,
            "encoder: position id ", p, " outside the position table");
    Tensor tok = embedding(g, params.token_emb, row.token_ids);
    Tensor pos = embedding(g, params.pos_emb, row.position_ids);
    Tensor seg = embedding(g, params.seg_emb, row.segment_ids);
    return add(g, add(g, tok, pos), seg);
  }

  /// Combine the schedule with padding: pad columns are never attended,
  /// except that every position may always attend to itself (so no row is
  /// ever all-false).
  BoolMatrix effective_mask(const BoolMatrix& schedule,
                            const EncodedRow& row) const {
    const std::size_t t = row.seq_len();
    BoolMatrix eff = schedule;
    for (std::size_t q = 0; q < t; ++q)
      for (std::size_t k = 0; k < t; ++k)
        if (row.pad_mask[k] && q != k) eff.set(q, k, false);
    for (std::size_t q = 0; q < t; ++q) eff.set(q, q, true);
    return eff;
  }

  mutable std::size_t passes_ = 0;
};

} // namespace ranklab
