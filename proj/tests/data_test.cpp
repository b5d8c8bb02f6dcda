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
#include <fstream>

#include "ranklab/data.hpp"

using namespace ranklab;

namespace {

std::set<std::string> bag(const std::string& text) {
  std::set<std::string> s;
  for (const auto& w : split_words(text)) s.insert(w);
  return s;
}

std::size_t overlap(const std::set<std::string>& a,
                    const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& w : a)
    if (b.count(w)) ++n;
  return n;
}

} // namespace

TEST_CASE("generation is deterministic: same seed, same bytes", "[data]") {
  SyntheticTaskSpec spec;
  spec.vocab_size = 100;
  spec.seed = 77;
  auto r1 = generate_synthetic(spec, 20, "train");
  auto r2 = generate_synthetic(spec, 20, "train");
  REQUIRE(r1.size() == r2.size());
  std::string s1, s2;
  for (std::size_t i = 0; i < r1.size(); ++i) {
    s1 += record_to_json(r1[i]).dump() + "\n";
    s2 += record_to_json(r2[i]).dump() + "\n";
  }
  CHECK(s1 == s2);
  // distinct splits draw distinct dialogues
  auto valid = generate_synthetic(spec, 20, "valid");
  CHECK(record_to_json(valid[0]).dump() != record_to_json(r1[0]).dump());
}

TEST_CASE("every record has exactly one rule-satisfying candidate", "[data]") {
  for (SyntheticRule rule : {SyntheticRule::KeywordEcho,
                             SyntheticRule::ArithmeticNext,
                             SyntheticRule::CopyLastToken}) {
    for (DistractorStrategy ds :
         {DistractorStrategy::Random, DistractorStrategy::Hard}) {
      CAPTURE(to_string(rule), to_string(ds));
      SyntheticTaskSpec spec;
      spec.rule = rule;
      spec.distractors = ds;
      spec.vocab_size = 120;
      spec.num_candidates = 6;
      spec.seed = 3;
      auto records = generate_synthetic(spec, 25, "test");
      for (const auto& r : records) {
        std::vector<std::string> ctx_words;
        for (const auto& u : r.dialogue.context)
          for (const auto& w : split_words(u.text)) ctx_words.push_back(w);
        // Recover the planted keywords from the positive candidate.
        std::set<std::string> planted;
        if (rule == SyntheticRule::KeywordEcho) {
          for (const auto& w : split_words(
                   r.dialogue.candidates[static_cast<std::size_t>(
                       *r.dialogue.positive_index)]))
            if (w.rfind("kw", 0) == 0 &&
                std::find(ctx_words.begin(), ctx_words.end(), w) !=
                    ctx_words.end())
              planted.insert(w);
        }
        int satisfying = 0;
        for (const auto& cand : r.dialogue.candidates)
          if (rule_satisfied(spec, ctx_words, planted, cand)) ++satisfying;
        CHECK(satisfying == 1);
        CHECK(rule_satisfied(
            spec, ctx_words, planted,
            r.dialogue.candidates[static_cast<std::size_t>(
                *r.dialogue.positive_index)]));
      }
    }
  }
}

TEST_CASE("copy-last-token: positive starts with the context's last token",
          "[data]") {
  SyntheticTaskSpec spec;
  spec.rule = SyntheticRule::CopyLastToken;
  spec.vocab_size = 80;
  spec.seed = 9;
  auto records = generate_synthetic(spec, 30, "train");
  for (const auto& r : records) {
    const auto& last_turn = r.dialogue.context.back().text;
    const auto ctx_words = split_words(last_turn);
    const auto pos_words = split_words(
        r.dialogue.candidates[static_cast<std::size_t>(*r.dialogue.positive_index)]);
    CHECK(pos_words.front() == ctx_words.back());
  }
}

TEST_CASE("bag-of-words overlap heuristic solves keyword-echo with random "
          "distractors",
          "[data]") {
  SyntheticTaskSpec spec;
  spec.rule = SyntheticRule::KeywordEcho;
  spec.distractors = DistractorStrategy::Random;
  spec.vocab_size = 200;
  spec.num_candidates = 10;
  spec.seed = 123;
  auto records = generate_synthetic(spec, 200, "test");
  int correct = 0;
  for (const auto& r : records) {
    std::set<std::string> ctx;
    for (const auto& u : r.dialogue.context)
      for (const auto& w : split_words(u.text)) ctx.insert(w);
    std::size_t best = 0;
    std::size_t best_score = 0;
    for (std::size_t i = 0; i < r.dialogue.candidates.size(); ++i) {
      const std::size_t s = overlap(bag(r.dialogue.candidates[i]), ctx);
      if (s > best_score) {
        best_score = s;
        best = i;
      }
    }
    if (best == static_cast<std::size_t>(*r.dialogue.positive_index))
      ++correct;
  }
  CHECK(double(correct) / double(records.size()) > 0.9);
}

TEST_CASE("hard distractors defeat the overlap heuristic less often",
          "[data]") {
  SyntheticTaskSpec spec;
  spec.rule = SyntheticRule::KeywordEcho;
  spec.distractors = DistractorStrategy::Hard;
  spec.vocab_size = 200;
  spec.num_candidates = 10;
  spec.seed = 123;
  auto records = generate_synthetic(spec, 100, "test");
  // Hard distractors share all but one keyword, so candidate overlaps tie
  // and the heuristic cannot be near-perfect.
  int correct = 0;
  for (const auto& r : records) {
    std::set<std::string> ctx;
    for (const auto& u : r.dialogue.context)
      for (const auto& w : split_words(u.text)) ctx.insert(w);
    std::size_t best = 0, best_score = 0;
    for (std::size_t i = 0; i < r.dialogue.candidates.size(); ++i) {
      const std::size_t s = overlap(bag(r.dialogue.candidates[i]), ctx);
      if (s > best_score) {
        best_score = s;
        best = i;
      }
    }
    if (best == static_cast<std::size_t>(*r.dialogue.positive_index))
      ++correct;
  }
  CHECK(correct < 95);
}

TEST_CASE("corpus json round trip", "[data]") {
  SyntheticTaskSpec spec;
  spec.vocab_size = 60;
  auto records = generate_synthetic(spec, 10, "valid");
  auto path = std::filesystem::temp_directory_path() / "ranklab_corpus.jsonl";
  write_corpus(path.string(), records);
  auto loaded = read_corpus(path.string());
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].split == records[i].split);
    CHECK(loaded[i].dialogue.candidates == records[i].dialogue.candidates);
    CHECK(*loaded[i].dialogue.positive_index ==
          *records[i].dialogue.positive_index);
    REQUIRE(loaded[i].dialogue.context.size() ==
            records[i].dialogue.context.size());
    for (std::size_t u = 0; u < loaded[i].dialogue.context.size(); ++u) {
      CHECK(loaded[i].dialogue.context[u].speaker ==
            records[i].dialogue.context[u].speaker);
      CHECK(loaded[i].dialogue.context[u].text ==
            records[i].dialogue.context[u].text);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("shuffling candidates keeps the label on the same text", "[data]") {
  SyntheticTaskSpec spec;
  spec.vocab_size = 60;
  spec.num_candidates = 5;
  auto records = generate_synthetic(spec, 5, "train");
  Rng rng(2);
  for (const auto& r : records) {
    std::vector<std::size_t> perm(r.dialogue.candidates.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CorpusRecord shuffled = shuffle_candidates(r, perm);
    const std::string& before =
        r.dialogue.candidates[static_cast<std::size_t>(*r.dialogue.positive_index)];
    const std::string& after =
        shuffled.dialogue
            .candidates[static_cast<std::size_t>(*shuffled.dialogue.positive_index)];
    CHECK(before == after);
  }
}

TEST_CASE("ubuntu ingestion groups eval lines and filters train pairs",
          "[data]") {
  auto dir = std::filesystem::temp_directory_path();
  const auto eval_path = dir / "ranklab_eval.tsv";
  {
    std::ofstream os(eval_path);
    // 10 lines for context A (positive on line 3 -> index 2), then 10 for B.
    for (int i = 0; i < 10; ++i)
      os << "hello there __eou__ __eot__ general reply __eou__\tcand" << i
         << "\t" << (i == 2 ? 1 : 0) << "\n";
    for (int i = 0; i < 10; ++i)
      os << "second context __eou__\tother" << i << "\t" << (i == 7 ? 1 : 0)
         << "\n";
  }
  auto [records, stats] = ingest_ubuntu(eval_path.string(), "test");
  REQUIRE(records.size() == 2);
  CHECK(stats.records == 2);
  CHECK(*records[0].dialogue.positive_index == 2);
  CHECK(*records[1].dialogue.positive_index == 7);
  CHECK(records[0].dialogue.candidates.size() == 10);
  // __eot__ splits turns; __eou__ markers are stripped
  REQUIRE(records[0].dialogue.context.size() == 2);
  CHECK(records[0].dialogue.context[0].text == "hello there");
  CHECK(records[0].dialogue.context[1].text == "general reply");

  // truncated trailing group: partial ingest plus a warning count
  {
    std::ofstream os(eval_path, std::ios::app);
    for (int i = 0; i < 4; ++i)
      os << "third context\textra" << i << "\t" << (i == 0 ? 1 : 0) << "\n";
  }
  auto [records2, stats2] = ingest_ubuntu(eval_path.string(), "test");
  CHECK(records2.size() == 2);
  CHECK(stats2.skipped_truncated_group == 1);

  // two positives in one group is an error
  const auto bad_path = dir / "ranklab_bad.tsv";
  {
    std::ofstream os(bad_path);
    for (int i = 0; i < 10; ++i)
      os << "ctx\tcand" << i << "\t" << (i < 2 ? 1 : 0) << "\n";
  }
  CHECK_THROWS_AS(ingest_ubuntu(bad_path.string(), "valid"), ConfigError);

  // train mode: label-1 lines pass through, label-0 dropped, junk counted
  const auto train_path = dir / "ranklab_train.tsv";
  {
    std::ofstream os(train_path);
    os << "ctx one\tresp one\t1\n";
    os << "ctx one\tresp neg\t0\n";
    os << "malformed line without tabs\n";
    os << "ctx two __eot__ more\tresp two\t1\n";
  }
  auto [train_records, train_stats] = ingest_ubuntu(train_path.string(), "train");
  REQUIRE(train_records.size() == 2);
  CHECK(train_stats.skipped_negative_pairs == 1);
  CHECK(train_stats.skipped_malformed == 1);
  CHECK(train_records[0].dialogue.candidates.size() == 1);
  CHECK(*train_records[0].dialogue.positive_index == 0);

  // eval record count equals line count / 10 on a clean 100-line fixture
  const auto fixture = dir / "ranklab_fixture.tsv";
  {
    std::ofstream os(fixture);
    for (int g = 0; g < 10; ++g)
      for (int i = 0; i < 10; ++i)
        os << "fixture context " << g << "\tcand" << g << "_" << i << "\t"
           << (i == g % 10 ? 1 : 0) << "\n";
  }
  auto [fr, fs] = ingest_ubuntu(fixture.string(), "valid");
  CHECK(fr.size() == 10);

  std::filesystem::remove(eval_path);
  std::filesystem::remove(bad_path);
  std::filesystem::remove(train_path);
  std::filesystem::remove(fixture);
}
