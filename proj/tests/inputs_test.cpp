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

#include <filesystem>

#include "ranklab/inputs.hpp"

using namespace ranklab;

namespace {

Vocab tiny_vocab() {
  Vocab v;
  for (const char* w : {"hello", "how", "are", "you", "fine", "thanks", "bye",
                        "what", "is", "up", "a", "b", "c", "d"})
    v.add(w);
  return v;
}

// Context that assembles to exactly 5 positions ([SPK1] + 4 tokens) with two
// one-token candidates (span width 3 each).
Dialogue fig_dialogue() {
  Dialogue d;
  d.context = {{1, "how are you hello"}};
  d.candidates = {"fine", "bye"};
  d.positive_index = 0;
  return d;
}

} // namespace

TEST_CASE("tokenize folds case and maps unknowns", "[inputs]") {
  Vocab v = tiny_vocab();
  const int hello = v.id("hello");
  CHECK(tokenize("Hello hello", v) == std::vector<int>{hello, hello});
  CHECK(tokenize("", v).empty());
  CHECK(tokenize("zebra", v) == std::vector<int>{Vocab::kUnk});
}

TEST_CASE("tokenize round-trips through detokenize", "[inputs]") {
  Vocab v = tiny_vocab();
  Rng rng(4);
  std::uniform_int_distribution<int> pick(Vocab::kNumReserved,
                                          static_cast<int>(v.size()) - 1);
  std::uniform_int_distribution<int> len(1, 12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> ids;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) ids.push_back(pick(rng));
    CHECK(tokenize(detokenize(ids, v), v) == ids);
  }
}

TEST_CASE("vocab save/load keeps ids stable", "[inputs]") {
  Vocab v = tiny_vocab();
  auto path = std::filesystem::temp_directory_path() / "ranklab_vocab_test.txt";
  v.save(path.string());
  Vocab loaded = Vocab::load(path.string());
  REQUIRE(loaded.size() == v.size());
  for (int id = 0; id < static_cast<int>(v.size()); ++id)
    CHECK(loaded.token(id) == v.token(id));
  CHECK(loaded.id("[MASK]") == Vocab::kMask);
  std::filesystem::remove(path);
}

TEST_CASE("assemble repeats candidate positions", "[inputs]") {
  Vocab v = tiny_vocab();
  EncodedRow row = assemble(fig_dialogue(), v, {PositionScheme::Repeated, 64});
  REQUIRE(row.seq_len() == 11);
  CHECK(row.context_len == 5);
  CHECK(row.position_ids ==
        std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 5, 6, 7});
  CHECK(row.segment_ids == std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1});
  REQUIRE(row.candidate_spans.size() == 2);
  CHECK(row.candidate_spans[0].begin == 5);
  CHECK(row.candidate_spans[0].end == 8);
  CHECK(row.candidate_spans[1].begin == 8);
  CHECK(row.candidate_spans[1].end == 11);
  CHECK(row.token_ids[0] == Vocab::kSpk1);
  CHECK(row.token_ids[5] == Vocab::kCls);
  CHECK(row.token_ids[7] == Vocab::kSep);
}

TEST_CASE("assemble sequential positions continue monotonically", "[inputs]") {
  Vocab v = tiny_vocab();
  EncodedRow row = assemble(fig_dialogue(), v, {PositionScheme::Sequential, 64});
  CHECK(row.position_ids ==
        std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
}

TEST_CASE("assemble pads shorter candidates inside a fixed span width",
          "[inputs]") {
  Vocab v = tiny_vocab();
  Dialogue d;
  d.context = {{1, "hello"}, {2, "how are you"}};
  d.candidates = {"fine thanks bye", "up"};
  EncodedRow row = assemble(d, v, {PositionScheme::Repeated, 64});
  REQUIRE(row.candidate_spans.size() == 2);
  const Span s0 = row.candidate_spans[0], s1 = row.candidate_spans[1];
  CHECK(s0.width() == 5);
  CHECK(s1.width() == 5);
  // Second candidate: [CLS] up [SEP] [PAD] [PAD]
  CHECK(row.token_ids[s1.begin] == Vocab::kCls);
  CHECK(row.token_ids[s1.begin + 2] == Vocab::kSep);
  CHECK(row.token_ids[s1.begin + 3] == Vocab::kPad);
  CHECK(row.pad_mask[s1.begin + 3] == 1);
  CHECK(row.pad_mask[s1.begin + 4] == 1);
  CHECK(row.pad_mask[s1.begin + 2] == 0);
  // Repeated positions are identical across spans.
  for (std::size_t j = 0; j < s0.width(); ++j)
    CHECK(row.position_ids[s0.begin + j] == row.position_ids[s1.begin + j]);
  // Speaker tokens alternate with explicit tags.
  CHECK(row.token_ids[0] == Vocab::kSpk1);
  const auto second_utt = 1 + tokenize("hello", v).size();
  CHECK(row.token_ids[second_utt] == Vocab::kSpk2);
}

TEST_CASE("assemble truncates context from the left", "[inputs]") {
  Vocab v = tiny_vocab();
  Dialogue d;
  d.context = {{1, "a a a a a a a a"}, {2, "b b"}, {1, "c"}};
  d.candidates = {"d"};
  // Span width 3; max_len 10 leaves 7 for context; utterances are 9, 3 and
  // 2 tokens with speaker marks, so the oldest one must go.
  EncodedRow row = assemble(d, v, {PositionScheme::Repeated, 10});
  CHECK(row.context_len == 5);
  CHECK(row.token_ids[0] == Vocab::kSpk2);
  CHECK(row.token_ids[1] == v.id("b"));
  CHECK(row.seq_len() <= 10);
  CHECK(row.truncated_candidates == 0);
}

TEST_CASE("assemble truncates oversized candidates with a warning count",
          "[inputs]") {
  Vocab v = tiny_vocab();
  Dialogue d;
  d.context = {{1, "hello"}};
  d.candidates = {"a b c d a b c d a b c d", "a"};
  EncodedRow row = assemble(d, v, {PositionScheme::Repeated, 16});
  CHECK(row.truncated_candidates >= 1);
  CHECK(row.seq_len() <= 16);
}

TEST_CASE("assemble rejects an empty candidate list", "[inputs]") {
  Vocab v = tiny_vocab();
  Dialogue d;
  d.context = {{1, "hello"}};
  CHECK_THROWS_AS(assemble(d, v, {}), ContractError);
}

TEST_CASE("assembly is a pure function", "[inputs]") {
  Vocab v = tiny_vocab();
  Dialogue d;
  d.context = {{1, "what is up"}, {2, "fine thanks"}};
  d.candidates = {"bye bye", "hello you"};
  auto r1 = assemble(d, v, {PositionScheme::Repeated, 32});
  auto r2 = assemble(d, v, {PositionScheme::Repeated, 32});
  CHECK(r1.token_ids == r2.token_ids);
  CHECK(r1.position_ids == r2.position_ids);
  CHECK(r1.segment_ids == r2.segment_ids);
  CHECK(r1.pad_mask == r2.pad_mask);
}

TEST_CASE("candidate spans never overlap the context region", "[inputs]") {
  Vocab v = tiny_vocab();
  Rng rng(9);
  std::uniform_int_distribution<int> n_utts(1, 4), n_cands(1, 5), n_words(1, 6);
  std::uniform_int_distribution<int> pick(Vocab::kNumReserved,
                                          static_cast<int>(v.size()) - 1);
  for (int trial = 0; trial < 40; ++trial) {
    Dialogue d;
    const int nu = n_utts(rng);
    for (int i = 0; i < nu; ++i) {
      std::string text;
      const int nw = n_words(rng);
      for (int w = 0; w < nw; ++w) {
        if (w) text += ' ';
        text += v.token(pick(rng));
      }
      d.context.push_back({i % 2 == 0 ? 1 : 2, text});
    }
    const int nc = n_cands(rng);
    for (int i = 0; i < nc; ++i) {
      std::string text;
      const int nw = n_words(rng);
      for (int w = 0; w < nw; ++w) {
        if (w) text += ' ';
        text += v.token(pick(rng));
      }
      d.candidates.push_back(text);
    }
    EncodedRow row = assemble(d, v, {PositionScheme::Repeated, 128});
    std::size_t prev_end = row.context_len;
    for (const Span& s : row.candidate_spans) {
      CHECK(s.begin >= row.context_len);
      CHECK(s.begin >= prev_end);
      CHECK(s.end <= row.seq_len());
      prev_end = s.end;
      for (std::size_t p = s.begin; p < s.end; ++p)
        CHECK(row.segment_ids[p] == 1);
    }
    for (std::size_t p = 0; p < row.context_len; ++p)
      CHECK(row.segment_ids[p] == 0);
  }
}

TEST_CASE("candidates-only assembly isolates spans from any context",
          "[inputs]") {
  Vocab v = tiny_vocab();
  Dialogue d;
  d.context = {{1, "hello"}};
  d.candidates = {"fine thanks", "bye"};
  EncodedRow row = assemble_candidates_only(d, v, 64);
  CHECK(row.context_len == 0);
  REQUIRE(row.candidate_spans.size() == 2);
  CHECK(row.candidate_spans[0].begin == 0);
  CHECK(row.position_ids[0] == 0);
  // Both spans restart their numbering.
  const Span s1 = row.candidate_spans[1];
  CHECK(row.position_ids[s1.begin] == 0);
}
