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

#include <catch2/catch_amalgamated.hpp>

#include "ranklab/paradigms.hpp"
#include "test_util.hpp"

using namespace ranklab;

namespace {

Vocab word_vocab(int words) {
  Vocab v;
  for (int i = 0; i < words; ++i) v.add("w" + std::to_string(i));
  return v;
}

std::string random_text(const Vocab& v, Rng& rng, int n_words) {
  std::uniform_int_distribution<int> pick(Vocab::kNumReserved,
                                          static_cast<int>(v.size()) - 1);
  std::string text;
  for (int i = 0; i < n_words; ++i) {
    if (i) text += ' ';
    text += v.token(pick(rng));
  }
  return text;
}

Dialogue random_dialogue(const Vocab& v, Rng& rng, int n_utts, int n_cands,
                         int words_per = 4) {
  Dialogue d;
  for (int i = 0; i < n_utts; ++i)
    d.context.push_back({i % 2 == 0 ? 1 : 2, random_text(v, rng, words_per)});
  for (int i = 0; i < n_cands; ++i)
    d.candidates.push_back(random_text(v, rng, words_per));
  return d;
}

EncoderConfig small_config(const Vocab& v) {
  EncoderConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.model_dim = 16;
  cfg.ff_dim = 32;
  cfg.max_len = 96;
  cfg.vocab_size = static_cast<int>(v.size());
  return cfg;
}

} // namespace

TEST_CASE("rank orders descending with stable ties and rejects NaN",
          "[paradigms]") {
  CHECK(rank({0.1, 0.9, 0.5}) == std::vector<std::size_t>{1, 2, 0});
  CHECK(rank({0.5, 0.5}) == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_WITH(rank({0.1, std::nan(""), 0.3}),
                    Catch::Matchers::ContainsSubstring("candidate 1"));
  // random agreement with a naive sort oracle
  Rng rng(8);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(10);
    for (auto& x : s) x = u(rng);
    auto order = rank(s);
    for (std::size_t i = 1; i < order.size(); ++i) {
      CHECK(s[order[i - 1]] >= s[order[i]]);
      if (s[order[i - 1]] == s[order[i]]) CHECK(order[i - 1] < order[i]);
    }
  }
}

TEST_CASE("score vector: softmax sums to one, argmax consistent",
          "[paradigms]") {
  auto sv = ScoreVector::from_scores({1.0, 3.0, 2.0});
  double sum = 0.0;
  for (double p : sv.probabilities) sum += p;
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  const auto amax_s = std::distance(
      sv.scores.begin(), std::max_element(sv.scores.begin(), sv.scores.end()));
  const auto amax_p =
      std::distance(sv.probabilities.begin(),
                    std::max_element(sv.probabilities.begin(),
                                     sv.probabilities.end()));
  CHECK(amax_s == amax_p);
}

TEST_CASE("score_bi: orthogonality, positive scaling, loop oracle",
          "[paradigms]") {
  Graph g(false);
  Tensor ctx({1, 2}, {1, 0});
  std::vector<Tensor> cands{Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {0, 1})};
  Tensor logits = score_bi(g, ctx, cands);
  CHECK(logits.data()[0] == 1.0);
  CHECK(logits.data()[1] == 0.0);
  CHECK(rank({logits.data()[0], logits.data()[1]})[0] == 0);

  // positive scaling of f(C) preserves the argmax
  Tensor scaled = scale(g, ctx, 7.5);
  Tensor logits2 = score_bi(g, scaled, cands);
  CHECK(rank({logits2.data()[0], logits2.data()[1]})[0] == 0);

  // random case against a plain dot-product loop
  Rng rng(5);
  Tensor rctx = Tensor::randn({1, 8}, rng, 1.0);
  std::vector<Tensor> rcands;
  for (int i = 0; i < 5; ++i) rcands.push_back(Tensor::randn({1, 8}, rng, 1.0));
  Tensor rlogits = score_bi(g, rctx, rcands);
  for (int i = 0; i < 5; ++i) {
    double dot = 0.0;
    for (int j = 0; j < 8; ++j)
      dot += rctx.data()[j] * rcands[static_cast<std::size_t>(i)].data()[j];
    CHECK(std::abs(rlogits.data()[static_cast<std::size_t>(i)] - dot) <= 1e-12);
  }
  // dimension mismatch names the shapes
  std::vector<Tensor> bad{Tensor::zeros({1, 4})};
  CHECK_THROWS_AS(score_bi(g, rctx, bad), ContractError);
}

TEST_CASE("score_poly matches an unfused reference and degenerates to bi",
          "[paradigms]") {
  Rng rng(31);
  Graph g(false);
  const std::size_t t = 7, d = 8, m = 3;
  Tensor states = Tensor::randn({t, d}, rng, 1.0);
  Tensor codes = Tensor::randn({m, d}, rng, 1.0);
  std::vector<Tensor> cands;
  for (int i = 0; i < 4; ++i) cands.push_back(Tensor::randn({1, d}, rng, 1.0));
  Tensor logits = score_poly(g, states, t, cands, codes);

  // Unfused reference: explicit loops over codes and features.
  for (std::size_t ci = 0; ci < cands.size(); ++ci) {
    std::vector<std::vector<double>> features(m, std::vector<double>(d, 0.0));
    for (std::size_t q = 0; q < m; ++q) {
      std::vector<double> logit(t);
      double mx = -1e300;
      for (std::size_t p = 0; p < t; ++p) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j)
          dot += codes.at(q, j) * states.at(p, j);
        logit[p] = dot;
        mx = std::max(mx, dot);
      }
      double denom = 0.0;
      std::vector<double> w(t);
      for (std::size_t p = 0; p < t; ++p) {
        w[p] = std::exp(logit[p] - mx);
        denom += w[p];
      }
      for (std::size_t p = 0; p < t; ++p)
        for (std::size_t j = 0; j < d; ++j)
          features[q][j] += w[p] / denom * states.at(p, j);
    }
    std::vector<double> wl(m);
    double mx = -1e300;
    for (std::size_t q = 0; q < m; ++q) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        dot += cands[ci].data()[j] * features[q][j];
      wl[q] = dot;
      mx = std::max(mx, dot);
    }
    double denom = 0.0;
    for (std::size_t q = 0; q < m; ++q) {
      wl[q] = std::exp(wl[q] - mx);
      denom += wl[q];
    }
    double score = 0.0;
    for (std::size_t q = 0; q < m; ++q)
      for (std::size_t j = 0; j < d; ++j)
        score += wl[q] / denom * features[q][j] * cands[ci].data()[j];
    CHECK(std::abs(logits.data()[ci] - score) <= 1e-10);
  }

  // m = 1 with a zero code: uniform attention over context, so the score is
  // the bi score against the mean-pooled context.
  Tensor zero_code = Tensor::zeros({1, d});
  Tensor poly1 = score_poly(g, states, t, cands, zero_code);
  std::vector<std::size_t> all_rows(t);
  std::iota(all_rows.begin(), all_rows.end(), 0);
  Tensor mean_ctx = mean_rows(g, states, all_rows);
  Tensor bi = score_bi(g, mean_ctx, cands);
  for (std::size_t i = 0; i < cands.size(); ++i)
    CHECK(std::abs(poly1.data()[i] - bi.data()[i]) <= 1e-12);

  // permuting the codes permutes nothing observable
  Tensor perm_codes = Tensor::zeros({m, d});
  for (std::size_t q = 0; q < m; ++q)
    for (std::size_t j = 0; j < d; ++j)
      perm_codes.at((q + 1) % m, j) = codes.at(q, j);
  Tensor logits_perm = score_poly(g, states, t, cands, perm_codes);
  for (std::size_t i = 0; i < cands.size(); ++i)
    CHECK(std::abs(logits.data()[i] - logits_perm.data()[i]) <= 1e-12);

  CHECK_THROWS_AS(score_poly(g, states, t, cands, Tensor()), ConfigError);
}

TEST_CASE("uni equals cross at M=1 with shared weights", "[paradigms]") {
  Vocab v = word_vocab(40);
  Rng rng(13);
  ModelParams params = ModelParams::init(small_config(v), rng);
  Encoder enc;
  for (int trial = 0; trial < 5; ++trial) {
    Dialogue d = random_dialogue(v, rng, 2, 1);
    Graph g(false);
    Tensor uni = score_uni(g, enc, params, d, v, {});
    Tensor cross = score_cross(g, enc, params, d, v, {});
    REQUIRE(uni.size() == 1);
    REQUIRE(cross.size() == 1);
    CHECK(std::abs(uni.data()[0] - cross.data()[0]) <= 1e-9);
  }
}

TEST_CASE("cross: duplicated candidates give duplicated scores",
          "[paradigms]") {
  Vocab v = word_vocab(30);
  Rng rng(19);
  ModelParams params = ModelParams::init(small_config(v), rng);
  Encoder enc;
  Dialogue d = random_dialogue(v, rng, 2, 1);
  d.candidates.push_back(d.candidates[0]);
  Graph g(false);
  Tensor logits = score_cross(g, enc, params, d, v, {});
  CHECK(logits.data()[0] == logits.data()[1]);
}

TEST_CASE("encoder pass-count contracts", "[paradigms]") {
  Vocab v = word_vocab(40);
  Rng rng(43);
  ModelParams params = ModelParams::init(small_config(v), rng, 4);
  Encoder enc;
  const int m = 7;
  Dialogue d = random_dialogue(v, rng, 2, m);
  Graph g(false);

  enc.reset_pass_count();
  score_uni(g, enc, params, d, v, {});
  CHECK(enc.pass_count() == 1);

  enc.reset_pass_count();
  score_cross(g, enc, params, d, v, {});
  CHECK(enc.pass_count() == static_cast<std::size_t>(m));

  enc.reset_pass_count();
  score_bi_dialogue(g, enc, params, d, v, {});
  CHECK(enc.pass_count() == 2);

  enc.reset_pass_count();
  score_poly_dialogue(g, enc, params, d, v, {});
  CHECK(enc.pass_count() == 2);
}

TEST_CASE("uni: permuting candidates permutes scores", "[paradigms]") {
  Vocab v = word_vocab(50);
  Rng rng(59);
  ModelParams params = ModelParams::init(small_config(v), rng);
  Encoder enc;
  for (int trial = 0; trial < 5; ++trial) {
    Dialogue d = random_dialogue(v, rng, 2, 4);
    std::vector<std::size_t> perm{2, 0, 3, 1};
    Dialogue pd = d;
    for (std::size_t i = 0; i < perm.size(); ++i)
      pd.candidates[i] = d.candidates[perm[i]];
    Graph g(false);
    Tensor base = score_uni(g, enc, params, d, v, {});
    Tensor permuted = score_uni(g, enc, params, pd, v, {});
    for (std::size_t i = 0; i < perm.size(); ++i)
      CHECK(std::abs(permuted.data()[i] - base.data()[perm[i]]) <= 1e-9);
  }
}

TEST_CASE("uni with untrained params is near-uniform over candidates",
          "[paradigms][slow]") {
  Vocab v = word_vocab(60);
  const int m = 10;
  const int n_seeds = 100;
  std::vector<double> mean_prob(m, 0.0);
  for (int seed = 0; seed < n_seeds; ++seed) {
    Rng rng(1000 + static_cast<std::uint64_t>(seed));
    ModelParams params = ModelParams::init(small_config(v), rng);
    Dialogue d = random_dialogue(v, rng, 2, m, 3);
    Encoder enc;
    Graph g(false);
    auto sv = to_score_vector(score_uni(g, enc, params, d, v, {}));
    for (int i = 0; i < m; ++i)
      mean_prob[static_cast<std::size_t>(i)] += sv.probabilities[static_cast<std::size_t>(i)];
  }
  for (auto& p : mean_prob) {
    p /= n_seeds;
    CHECK(p > 0.05);
    CHECK(p < 0.15);
  }
}

TEST_CASE("bi independence: candidate edits never move other scores",
          "[paradigms]") {
  Vocab v = word_vocab(40);
  Rng rng(67);
  ModelParams params = ModelParams::init(small_config(v), rng);
  Encoder enc;
  Dialogue d = random_dialogue(v, rng, 2, 3);
  Graph g(false);
  auto se_before =
      detail::encode_split(g, enc, params, d, v, {}, nullptr);
  Dialogue d2 = d;
  d2.candidates[2] = random_text(v, rng, 4);
  auto se_after = detail::encode_split(g, enc, params, d2, v, {}, nullptr);
  // candidate 0/1 representations are bit-identical
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < 16; ++j)
      CHECK(se_before.candidate_reprs[c].data()[j] ==
            se_after.candidate_reprs[c].data()[j]);
  // and the context representation ignores candidates entirely
  for (std::size_t j = 0; j < 16; ++j)
    CHECK(se_before.context_repr.data()[j] == se_after.context_repr.data()[j]);
}
