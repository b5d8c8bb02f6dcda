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
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ranklab/common.hpp"
#include "ranklab/encoder.hpp"
#include "ranklab/inputs.hpp"
#include "ranklab/masks.hpp"
#include "ranklab/tensor.hpp"

namespace ranklab {

/// The four ranking paradigms, realized as attention regimes over one
/// encoder:
///   uni   — context + all candidates in ONE pass, Arrow mask, repeated
///           candidate positions, shared linear scoring head
///   cross — one pass PER candidate over [context ; candidate], Square mask,
///           same scoring head
///   bi    — context pass + one batched candidates pass, isolated encodings,
///           dot-product scores
///   poly  — like bi, plus m learned context codes that attend over context
///           token states and are then attended by each candidate vector
enum class Paradigm { Bi, Poly, Cross, Uni };

inline Paradigm paradigm_from_string(const std::string& s) {
  if (s == "bi") return Paradigm::Bi;
  if (s == "poly") return Paradigm::Poly;
  if (s == "cross") return Paradigm::Cross;
  if (s == "uni") return Paradigm::Uni;
  throw ConfigError("unknown paradigm '" + s + "' (expected bi|poly|cross|uni)");
}

inline const char* to_string(Paradigm p) {
  switch (p) {
    case Paradigm::Bi: return "bi";
    case Paradigm::Poly: return "poly";
    case Paradigm::Cross: return "cross";
    case Paradigm::Uni: return "uni";
  }
  return "?";
}

inline MaskKind mask_kind_for(Paradigm p) {
  switch (p) {
    case Paradigm::Bi: return MaskKind::Diagonal;
    case Paradigm::Poly: return MaskKind::LightArrow;
    case Paradigm::Cross: return MaskKind::Square;
    case Paradigm::Uni: return MaskKind::Arrow;
  }
  return MaskKind::Square;
}

/// Scores plus their softmax; probabilities sum to 1 and argmax(score) ==
/// argmax(probability) by construction.
struct ScoreVector {
  std::vector<double> scores;
  std::vector<double> probabilities;

  static ScoreVector from_scores(std::vector<double> s) {
    ScoreVector v;
    v.probabilities.resize(s.size());
    double mx = s.empty() ? 0.0 : *std::max_element(s.begin(), s.end());
    double denom = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      v.probabilities[i] = std::exp(s[i] - mx);
      denom += v.probabilities[i];
    }
    for (auto& p : v.probabilities) p /= denom;
    v.scores = std::move(s);
    return v;
  }
};

inline ScoreVector to_score_vector(const Tensor& logits) {
  std::vector<double> s(logits.data().begin(), logits.data().end());
  return ScoreVector::from_scores(std::move(s));
}

/// Stable best-first ranking; ties broken by the lower candidate index.
inline std::vector<std::size_t> rank(const std::vector<double>& scores) {
  for (std::size_t i = 0; i < scores.size(); ++i)
    check(!std::isnan(scores[i]), "rank: candidate ", i, " has NaN score");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  return order;
}

struct ScorerOptions {
  PositionScheme scheme = PositionScheme::Repeated;
  std::size_t max_len = 512;
  bool context_sees_candidates = true;
  int poly_codes = 4;
  bool train = false;
  Rng* rng = nullptr;
  bool want_mlm = false;
  /// Applied to every assembled row right before its encoder pass (the
  /// trainer uses this to corrupt tokens for the masked-LM objective, so
  /// both losses come out of the same forward).
  std::function<void(EncodedRow&)> row_hook;
};

/// Per-pass byproducts a trainer needs (assembled rows and MLM logits).
struct ScoreDetail {
  std::vector<EncodedRow> rows;      // every row that went through the encoder
  std::vector<Tensor> mlm_logits;    // parallel to rows when want_mlm
};

// --- Representation-level scoring -----------------------------------------

/// Dot product of the context representation with each candidate
/// representation (all 1 x D); logits as an M x 1 tensor.
inline Tensor score_bi(Graph& g, const Tensor& context_repr,
                       const std::vector<Tensor>& candidate_reprs) {
  check(!candidate_reprs.empty(), "score_bi: no candidates");
  std::vector<Tensor> rows;
  rows.reserve(candidate_reprs.size());
  for (const auto& r : candidate_reprs) {
    check(r.cols() == context_repr.cols(),
          "score_bi: dimension mismatch: ", shape_str(context_repr.shape()),
          " vs ", shape_str(r.shape()));
    rows.push_back(matmul(g, context_repr, transpose(g, r))); // 1 x 1
  }
  return concat_rows(g, rows); // M x 1
}

/// Poly scoring: m codes attend over context token states to form m global
/// features; each candidate vector attends over those features and is scored
/// by a dot product with the resulting context vector.
inline Tensor score_poly(Graph& g, const Tensor& context_token_states,
                         std::size_t context_len,
                         const std::vector<Tensor>& candidate_reprs,
                         const Tensor& codes) {
  check_config(codes.defined() && codes.rows() >= 1,
               "score_poly: needs m >= 1 context codes");
  check(!candidate_reprs.empty(), "score_poly: no candidates");
  check(context_len >= 1 && context_len <= context_token_states.rows(),
        "score_poly: bad context length");
  const std::size_t m = codes.rows();
  // Codes attend over the context positions only.
  BoolMatrix ctx_mask(1, context_token_states.rows(), false);
  for (std::size_t i = 0; i < context_len; ++i) ctx_mask.set(0, i, true);
  Tensor attn_logits =
      matmul(g, codes, transpose(g, context_token_states)); // m x T
  Tensor attn = masked_softmax(g, attn_logits, ctx_mask);
  Tensor features = matmul(g, attn, context_token_states); // m x D
  std::vector<Tensor> rows;
  rows.reserve(candidate_reprs.size());
  for (const auto& cand : candidate_reprs) {
    Tensor w = matmul(g, cand, transpose(g, features)); // 1 x m
    BoolMatrix all(1, m, true);
    Tensor wsm = masked_softmax(g, w, all);
    Tensor ctx_vec = matmul(g, wsm, features); // 1 x D
    rows.push_back(matmul(g, ctx_vec, transpose(g, cand))); // 1 x 1
  }
  return concat_rows(g, rows); // M x 1
}

// --- Dialogue-level scoring ------------------------------------------------

namespace detail {

inline Tensor head_scores(Graph& g, const ModelParams& params,
                          const std::vector<Tensor>& candidate_vectors) {
  Tensor stacked = concat_rows(g, candidate_vectors);          // M x D
  Tensor logits = matmul(g, stacked, params.score_w);          // M x 1
  return add_rowvec(g, logits, params.score_b);
}

} // namespace detail

/// One forward pass over [context ; r_1 ... r_M] with the Arrow schedule and
/// repeated candidate positions; logits from the shared linear head.
inline Tensor score_uni(Graph& g, const Encoder& enc, const ModelParams& params,
                        const Dialogue& d, const Vocab& vocab,
                        const ScorerOptions& opt = {}, ScoreDetail* detail_out = nullptr) {
  AssembleOptions aopt;
  aopt.scheme = opt.scheme;
  aopt.max_len = opt.max_len;
  EncodedRow row = assemble(d, vocab, aopt);
  if (opt.row_hook) opt.row_hook(row);
  MaskOptions mopt;
  mopt.context_sees_candidates = opt.context_sees_candidates;
  MaskSchedule sched =
      build_mask(MaskKind::Arrow, row.context_len, row.candidate_spans,
                 row.seq_len(), params.config.layers, mopt);
  ForwardOptions fopt{opt.train, opt.rng, opt.want_mlm};
  EncoderOutput out = enc.forward(g, params, row, sched, fopt);
  if (detail_out) {
    detail_out->rows.push_back(row);
    if (opt.want_mlm) detail_out->mlm_logits.push_back(out.mlm_logits);
  }
  return detail::head_scores(g, params, out.candidate_vectors);
}

/// M independent passes over [context ; r_i] with the Square schedule; the
/// same linear head scores each pass's aggregated candidate vector.
inline Tensor score_cross(Graph& g, const Encoder& enc,
                          const ModelParams& params, const Dialogue& d,
                          const Vocab& vocab, const ScorerOptions& opt = {},
                          ScoreDetail* detail_out = nullptr) {
  check(!d.candidates.empty(), "score_cross: no candidates");
  std::vector<Tensor> vectors;
  vectors.reserve(d.candidates.size());
  for (const auto& cand : d.candidates) {
    Dialogue single;
    single.context = d.context;
    single.candidates = {cand};
    AssembleOptions aopt;
    aopt.scheme = opt.scheme;
    aopt.max_len = opt.max_len;
    EncodedRow row = assemble(single, vocab, aopt);
    if (opt.row_hook) opt.row_hook(row);
    MaskSchedule sched =
        build_mask(MaskKind::Square, row.context_len, row.candidate_spans,
                   row.seq_len(), params.config.layers);
    ForwardOptions fopt{opt.train, opt.rng, opt.want_mlm};
    EncoderOutput out = enc.forward(g, params, row, sched, fopt);
    vectors.push_back(out.candidate_vectors.at(0));
    if (detail_out) {
      detail_out->rows.push_back(row);
      if (opt.want_mlm) detail_out->mlm_logits.push_back(out.mlm_logits);
    }
  }
  return detail::head_scores(g, params, vectors);
}

namespace detail {

struct SplitEncodings {
  Tensor context_states;   // Lc x D
  Tensor context_repr;     // 1 x D
  std::vector<Tensor> candidate_reprs;
};

/// Shared by bi and poly: one context-only pass plus one batched
/// candidates-only pass with isolated spans (1 + 1 encoder calls).
inline SplitEncodings encode_split(Graph& g, const Encoder& enc,
                                   const ModelParams& params, const Dialogue& d,
                                   const Vocab& vocab, const ScorerOptions& opt,
                                   ScoreDetail* detail_out) {
  SplitEncodings se;
  EncodedRow ctx_row = assemble_context_only(d, vocab, opt.max_len);
  if (opt.row_hook) opt.row_hook(ctx_row);
  MaskSchedule ctx_sched =
      build_mask(MaskKind::Square, ctx_row.context_len, {}, ctx_row.seq_len(),
                 params.config.layers);
  ForwardOptions fopt{opt.train, opt.rng, opt.want_mlm};
  EncoderOutput ctx_out = enc.forward(g, params, ctx_row, ctx_sched, fopt);
  se.context_states = ctx_out.token_states;
  std::vector<std::size_t> all_rows(ctx_row.seq_len());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  se.context_repr = mean_rows(g, ctx_out.token_states, all_rows);

  EncodedRow cand_row = assemble_candidates_only(d, vocab, opt.max_len);
  if (opt.row_hook) opt.row_hook(cand_row);
  MaskSchedule cand_sched =
      build_mask(MaskKind::Diagonal, 0, cand_row.candidate_spans,
                 cand_row.seq_len(), params.config.layers);
  EncoderOutput cand_out = enc.forward(g, params, cand_row, cand_sched, fopt);
  se.candidate_reprs = cand_out.candidate_vectors;
  if (detail_out) {
    detail_out->rows.push_back(ctx_row);
    detail_out->rows.push_back(cand_row);
    if (opt.want_mlm) {
      detail_out->mlm_logits.push_back(ctx_out.mlm_logits);
      detail_out->mlm_logits.push_back(cand_out.mlm_logits);
    }
  }
  return se;
}

} // namespace detail

inline Tensor score_bi_dialogue(Graph& g, const Encoder& enc,
                                const ModelParams& params, const Dialogue& d,
                                const Vocab& vocab, const ScorerOptions& opt = {},
                                ScoreDetail* detail_out = nullptr) {
  auto se = detail::encode_split(g, enc, params, d, vocab, opt, detail_out);
  return score_bi(g, se.context_repr, se.candidate_reprs);
}

inline Tensor score_poly_dialogue(Graph& g, const Encoder& enc,
                                  const ModelParams& params, const Dialogue& d,
                                  const Vocab& vocab,
                                  const ScorerOptions& opt = {},
                                  ScoreDetail* detail_out = nullptr) {
  auto se = detail::encode_split(g, enc, params, d, vocab, opt, detail_out);
  return score_poly(g, se.context_states, se.context_states.rows(),
                    se.candidate_reprs, params.poly_codes);
}

/// Paradigm dispatcher; logits as an M x 1 tensor on the graph.
inline Tensor score_dialogue(Graph& g, Paradigm p, const Encoder& enc,
                             const ModelParams& params, const Dialogue& d,
                             const Vocab& vocab, const ScorerOptions& opt = {},
                             ScoreDetail* detail_out = nullptr) {
  switch (p) {
    case Paradigm::Uni:
      return score_uni(g, enc, params, d, vocab, opt, detail_out);
    case Paradigm::Cross:
      return score_cross(g, enc, params, d, vocab, opt, detail_out);
    case Paradigm::Bi:
      return score_bi_dialogue(g, enc, params, d, vocab, opt, detail_out);
    case Paradigm::Poly:
      return score_poly_dialogue(g, enc, params, d, vocab, opt, detail_out);
  }
  throw ContractError("score_dialogue: bad paradigm");
}

} // namespace ranklab
