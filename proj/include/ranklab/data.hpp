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
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ranklab/common.hpp"
#include "ranklab/inputs.hpp"

namespace ranklab {

/// One corpus record: a dialogue (context, candidates, label) plus the split
/// it belongs to. Serialized as one JSON object per line:
///   {"context":[{"speaker":1,"text":"..."}],"candidates":["..."],"label":0}
struct CorpusRecord {
  Dialogue dialogue;
  std::string split; // train | valid | test

  void validate() const {
    check_config(!dialogue.context.empty(), "record: empty context");
    check_config(!dialogue.candidates.empty(), "record: no candidates");
    if (dialogue.positive_index) {
      check_config(*dialogue.positive_index >= 0 &&
                       *dialogue.positive_index <
                           static_cast<int>(dialogue.candidates.size()),
                   "record: label ", *dialogue.positive_index,
                   " out of range for ", dialogue.candidates.size(),
                   " candidates");
    }
    std::set<std::string> uniq(dialogue.candidates.begin(),
                               dialogue.candidates.end());
    check_config(uniq.size() == dialogue.candidates.size(),
                 "record: duplicate candidates");
  }
};

inline nlohmann::json record_to_json(const CorpusRecord& r) {
  nlohmann::json j;
  j["context"] = nlohmann::json::array();
  for (const auto& u : r.dialogue.context)
    j["context"].push_back({{"speaker", u.speaker}, {"text", u.text}});
  j["candidates"] = r.dialogue.candidates;
  if (r.dialogue.positive_index) j["label"] = *r.dialogue.positive_index;
  if (!r.split.empty()) j["split"] = r.split;
  return j;
}

inline CorpusRecord record_from_json(const nlohmann::json& j) {
  CorpusRecord r;
  for (const auto& u : j.at("context"))
    r.dialogue.context.push_back(
        {u.at("speaker").get<int>(), u.at("text").get<std::string>()});
  for (const auto& c : j.at("candidates"))
    r.dialogue.candidates.push_back(c.get<std::string>());
  if (j.contains("label")) r.dialogue.positive_index = j["label"].get<int>();
  if (j.contains("split")) r.split = j["split"].get<std::string>();
  return r;
}

inline void write_corpus(const std::string& path,
                         const std::vector<CorpusRecord>& records) {
  std::ofstream os(path);
  check_config(os.good(), "corpus: cannot write ", path);
  for (const auto& r : records) os << record_to_json(r).dump() << "\n";
}

inline std::vector<CorpusRecord> read_corpus(const std::string& path) {
  std::ifstream is(path);
  check_config(is.good(), "corpus: cannot open ", path);
  std::vector<CorpusRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      CorpusRecord r = record_from_json(nlohmann::json::parse(line));
      r.validate();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(detail::concat("corpus: ", path, ":", lineno, ": ",
                                       e.what()));
    }
  }
  return out;
}

// --- Synthetic ranking corpus ----------------------------------------------

enum class SyntheticRule { KeywordEcho, ArithmeticNext, CopyLastToken };

inline SyntheticRule rule_from_string(const std::string& s) {
  if (s == "keyword-echo") return SyntheticRule::KeywordEcho;
  if (s == "arithmetic-next") return SyntheticRule::ArithmeticNext;
  if (s == "copy-last-token") return SyntheticRule::CopyLastToken;
  throw ConfigError("unknown rule '" + s +
                    "' (expected keyword-echo|arithmetic-next|copy-last-token)");
}

inline const char* to_string(SyntheticRule r) {
  switch (r) {
    case SyntheticRule::KeywordEcho: return "keyword-echo";
    case SyntheticRule::ArithmeticNext: return "arithmetic-next";
    case SyntheticRule::CopyLastToken: return "copy-last-token";
  }
  return "?";
}

enum class DistractorStrategy { Random, Hard };

inline DistractorStrategy distractors_from_string(const std::string& s) {
  if (s == "random") return DistractorStrategy::Random;
  if (s == "hard") return DistractorStrategy::Hard;
  throw ConfigError("unknown distractor strategy '" + s +
                    "' (expected random|hard)");
}

inline const char* to_string(DistractorStrategy d) {
  return d == DistractorStrategy::Random ? "random" : "hard";
}

/// Controls for the generated ranking task. Exactly one candidate per
/// dialogue satisfies the rule; distractors are rejection-checked.
struct SyntheticTaskSpec {
  int vocab_size = 200;      // word tokens, excluding the reserved ids
  int context_turns = 3;
  int turn_len = 5;
  int candidate_len = 5;
  int num_candidates = 10;   // per record (1 positive + distractors)
  SyntheticRule rule = SyntheticRule::KeywordEcho;
  DistractorStrategy distractors = DistractorStrategy::Random;
  int keywords_per_dialogue = 3; // keyword-echo only
  std::uint64_t seed = 42;

  void validate() const {
    check_config(vocab_size >= 40, "gen: vocab_size must be >= 40");
    check_config(context_turns >= 1 && turn_len >= 1, "gen: empty context");
    check_config(candidate_len >= 1, "gen: empty candidates");
    check_config(num_candidates >= 2, "gen: need at least 2 candidates");
    check_config(keywords_per_dialogue >= 1, "gen: need >= 1 keyword");
    if (rule == SyntheticRule::KeywordEcho)
      check_config(candidate_len >= keywords_per_dialogue,
                   "gen: candidate_len ", candidate_len, " cannot echo ",
                   keywords_per_dialogue, " keywords");
  }
};

/// The deterministic word universe for a given vocab size: a keyword block,
/// a number block, and filler. All rules share it, so the vocab file depends
/// only on vocab_size.
struct WordUniverse {
  std::vector<std::string> keywords;
  std::vector<std::string> numbers;
  std::vector<std::string> filler;

  static WordUniverse build(int vocab_size) {
    WordUniverse u;
    const int kw = std::max(8, vocab_size / 5);
    const int num = std::min(100, vocab_size / 4);
    for (int i = 0; i < kw; ++i) u.keywords.push_back("kw" + std::to_string(i));
    for (int i = 0; i < num; ++i) u.numbers.push_back("n" + std::to_string(i));
    for (int i = 0; i < vocab_size - kw - num; ++i)
      u.filler.push_back("w" + std::to_string(i));
    return u;
  }

  Vocab vocab() const {
    Vocab v;
    for (const auto& w : keywords) v.add(w);
    for (const auto& w : numbers) v.add(w);
    for (const auto& w : filler) v.add(w);
    return v;
  }
};

namespace detail {

inline std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

inline std::set<std::string> word_set(const std::string& text) {
  std::set<std::string> s;
  for (const auto& w : split_words(text)) s.insert(w);
  return s;
}

} // namespace detail

/// Whether a candidate satisfies the generation rule for the given context.
inline bool rule_satisfied(const SyntheticTaskSpec& spec,
                           const std::vector<std::string>& context_words,
                           const std::set<std::string>& planted_keywords,
                           const std::string& candidate) {
  const auto cand_words = split_words(candidate);
  switch (spec.rule) {
    case SyntheticRule::KeywordEcho: {
      const auto cand_set = detail::word_set(candidate);
      for (const auto& k : planted_keywords)
        if (!cand_set.count(k)) return false;
      return true;
    }
    case SyntheticRule::ArithmeticNext: {
      if (cand_words.empty() || context_words.empty()) return false;
      const std::string& last = context_words.back();
      if (last.size() < 2 || last[0] != 'n') return false;
      const int k = std::stoi(last.substr(1));
      const WordUniverse u = WordUniverse::build(spec.vocab_size);
      const int next = (k + 1) % static_cast<int>(u.numbers.size());
      return cand_words.front() == "n" + std::to_string(next);
    }
    case SyntheticRule::CopyLastToken: {
      if (cand_words.empty() || context_words.empty()) return false;
      return cand_words.front() == context_words.back();
    }
  }
  return false;
}

/// Deterministic corpus generation. The positive candidate always satisfies
/// the rule; every distractor is rejection-checked not to.
inline std::vector<CorpusRecord> generate_synthetic(
    const SyntheticTaskSpec& spec, int n_records, const std::string& split) {
  spec.validate();
  const WordUniverse u = WordUniverse::build(spec.vocab_size);
  check_config(
      static_cast<int>(u.keywords.size()) > spec.keywords_per_dialogue,
      "gen: not enough keywords in a vocab of ", spec.vocab_size);
  // Distinct seeds per split so train/valid/test never share dialogues.
  const std::uint64_t salt =
      split == "train" ? 1 : (split == "valid" ? 2 : 3);
  Rng rng(spec.seed * 1000003 + salt);

  std::vector<CorpusRecord> out;
  out.reserve(static_cast<std::size_t>(n_records));
  for (int rec = 0; rec < n_records; ++rec) {
    // Context: filler words, then rule-specific planting.
    std::vector<std::vector<std::string>> turns(
        static_cast<std::size_t>(spec.context_turns));
    for (auto& t : turns) {
      for (int w = 0; w < spec.turn_len; ++w)
        t.push_back(detail::pick(u.filler, rng));
    }
    std::set<std::string> planted;
    if (spec.rule == SyntheticRule::KeywordEcho) {
      while (static_cast<int>(planted.size()) < spec.keywords_per_dialogue)
        planted.insert(detail::pick(u.keywords, rng));
      // Distinct slots, so no keyword overwrites another.
      const std::size_t total =
          static_cast<std::size_t>(spec.context_turns * spec.turn_len);
      check_config(total >= planted.size(),
                   "gen: context too short for ", planted.size(),
                   " keywords");
      std::vector<std::size_t> slots(total);
      std::iota(slots.begin(), slots.end(), 0);
      std::shuffle(slots.begin(), slots.end(), rng);
      std::size_t si = 0;
      for (const auto& kw : planted) {
        const std::size_t slot = slots[si++];
        turns[slot / static_cast<std::size_t>(spec.turn_len)]
             [slot % static_cast<std::size_t>(spec.turn_len)] = kw;
      }
    } else if (spec.rule == SyntheticRule::ArithmeticNext) {
      turns.back().back() = detail::pick(u.numbers, rng);
    }
    std::vector<std::string> context_words;
    for (const auto& t : turns)
      context_words.insert(context_words.end(), t.begin(), t.end());

    // Positive candidate.
    std::vector<std::string> pos_words;
    if (spec.rule == SyntheticRule::KeywordEcho) {
      pos_words.assign(planted.begin(), planted.end());
      std::shuffle(pos_words.begin(), pos_words.end(), rng);
      while (static_cast<int>(pos_words.size()) < spec.candidate_len)
        pos_words.push_back(detail::pick(u.filler, rng));
    } else if (spec.rule == SyntheticRule::ArithmeticNext) {
      const int k = std::stoi(context_words.back().substr(1));
      const int next = (k + 1) % static_cast<int>(u.numbers.size());
      pos_words.push_back("n" + std::to_string(next));
      while (static_cast<int>(pos_words.size()) < spec.candidate_len)
        pos_words.push_back(detail::pick(u.filler, rng));
    } else { // CopyLastToken
      pos_words.push_back(context_words.back());
      while (static_cast<int>(pos_words.size()) < spec.candidate_len)
        pos_words.push_back(detail::pick(u.filler, rng));
    }
    const std::string positive = detail::join(pos_words);
    check(rule_satisfied(spec, context_words, planted, positive),
          "gen: positive fails its own rule");

    // Distractors: never rule-satisfying, never duplicates.
    std::set<std::string> used{positive};
    std::vector<std::string> distractors;
    int guard = 0;
    while (static_cast<int>(distractors.size()) < spec.num_candidates - 1) {
      check_config(++guard < 10000 * spec.num_candidates,
                   "gen: rule unsatisfiable under the vocab constraints");
      std::vector<std::string> words;
      if (spec.rule == SyntheticRule::KeywordEcho) {
        if (spec.distractors == DistractorStrategy::Hard) {
          // Share all but one planted keyword.
          std::vector<std::string> kws(planted.begin(), planted.end());
          std::shuffle(kws.begin(), kws.end(), rng);
          kws.pop_back();
          std::string other;
          do {
            other = detail::pick(u.keywords, rng);
          } while (planted.count(other));
          kws.push_back(other);
          words = kws;
          std::shuffle(words.begin(), words.end(), rng);
          while (static_cast<int>(words.size()) < spec.candidate_len)
            words.push_back(detail::pick(u.filler, rng));
        } else {
          for (int w = 0; w < spec.candidate_len; ++w) {
            // Mostly filler with occasional keywords.
            std::uniform_int_distribution<int> coin(0, 3);
            words.push_back(coin(rng) == 0 ? detail::pick(u.keywords, rng)
                                           : detail::pick(u.filler, rng));
          }
        }
      } else if (spec.rule == SyntheticRule::ArithmeticNext) {
        if (spec.distractors == DistractorStrategy::Hard) {
          // A nearby number: plausible but wrong.
          const int k = std::stoi(context_words.back().substr(1));
          std::uniform_int_distribution<int> off(-3, 3);
          int j = (k + off(rng) + static_cast<int>(u.numbers.size())) %
                  static_cast<int>(u.numbers.size());
          words.push_back("n" + std::to_string(j));
        } else {
          words.push_back(detail::pick(u.numbers, rng));
        }
        while (static_cast<int>(words.size()) < spec.candidate_len)
          words.push_back(detail::pick(u.filler, rng));
      } else { // CopyLastToken
        if (spec.distractors == DistractorStrategy::Hard) {
          // First token drawn from elsewhere in the context.
          words.push_back(detail::pick(context_words, rng));
        } else {
          words.push_back(detail::pick(u.filler, rng));
        }
        while (static_cast<int>(words.size()) < spec.candidate_len)
          words.push_back(detail::pick(u.filler, rng));
      }
      const std::string cand = detail::join(words);
      if (used.count(cand)) continue;
      if (rule_satisfied(spec, context_words, planted, cand)) continue;
      used.insert(cand);
      distractors.push_back(cand);
    }

    // Shuffle the pool, tracking the positive's index.
    std::vector<std::string> pool = distractors;
    pool.push_back(positive);
    std::shuffle(pool.begin(), pool.end(), rng);
    int label = -1;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pool[i] == positive) label = static_cast<int>(i);

    CorpusRecord r;
    r.split = split;
    for (std::size_t t = 0; t < turns.size(); ++t)
      r.dialogue.context.push_back(
          {t % 2 == 0 ? 1 : 2, detail::join(turns[t])});
    r.dialogue.candidates = std::move(pool);
    r.dialogue.positive_index = label;
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

/// Reorder a record's candidates with the given permutation, keeping the
/// label pointing at the same candidate text.
inline CorpusRecord shuffle_candidates(const CorpusRecord& r,
                                       const std::vector<std::size_t>& perm) {
  check(perm.size() == r.dialogue.candidates.size(),
        "shuffle: permutation size mismatch");
  CorpusRecord out = r;
  for (std::size_t i = 0; i < perm.size(); ++i)
    out.dialogue.candidates[i] = r.dialogue.candidates[perm[i]];
  if (r.dialogue.positive_index) {
    for (std::size_t i = 0; i < perm.size(); ++i)
      if (perm[i] == static_cast<std::size_t>(*r.dialogue.positive_index))
        out.dialogue.positive_index = static_cast<int>(i);
  }
  return out;
}

// --- Ubuntu-style ingestion --------------------------------------------------

struct IngestStats {
  std::size_t records = 0;
  std::size_t skipped_malformed = 0;
  std::size_t skipped_negative_pairs = 0; // train split only
  std::size_t skipped_truncated_group = 0;
};

namespace detail {

inline std::vector<Utterance> split_context_turns(const std::string& raw) {
  // Ubuntu-style corpora separate turns with __eot__ and utterances with
  // __eou__; strip the latter, split on the former.
  std::vector<std::string> turns;
  std::string cur;
  const auto words = split_words(raw);
  for (const auto& w : words) {
    if (w == "__eot__") {
      if (!cur.empty()) turns.push_back(cur), cur.clear();
      continue;
    }
    if (w == "__eou__") continue;
    if (!cur.empty()) cur += ' ';
    cur += w;
  }
  if (!cur.empty()) turns.push_back(cur);
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < turns.size(); ++i)
    out.push_back({i % 2 == 0 ? 1 : 2, turns[i]});
  if (out.empty()) out.push_back({1, ""});
  return out;
}

} // namespace detail

/// Ingest a tab-separated context/candidate/label file.
///
/// Eval splits group runs of 10 consecutive lines sharing a context into one
/// 10-candidate record (the 1:9 layout); a group with more than one positive
/// is an error, a trailing partial group is skipped with a warning count.
/// The train split passes label-1 pairs through as single-candidate records
/// (negatives are recycled in-batch at training time, so label-0 lines are
/// dropped and counted).
inline std::pair<std::vector<CorpusRecord>, IngestStats> ingest_ubuntu(
    const std::string& path, const std::string& split,
    std::size_t group_size = 10) {
  std::ifstream is(path);
  check_config(is.good(), "ingest: cannot open ", path);
  const bool eval_mode = split != "train";
  std::vector<CorpusRecord> out;
  IngestStats stats;

  struct Line {
    std::string context, candidate;
    int label;
  };
  std::vector<Line> group;
  auto flush_group = [&]() {
    if (group.empty()) return;
    if (group.size() != group_size) {
      ++stats.skipped_truncated_group;
      group.clear();
      return;
    }
    int positive = -1;
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (group[i].label == 1) {
        check_config(positive < 0, "ingest: ", path,
                     ": eval group has more than one positive");
        positive = static_cast<int>(i);
      }
    }
    check_config(positive >= 0, "ingest: ", path,
                 ": eval group has no positive");
    CorpusRecord r;
    r.split = split;
    r.dialogue.context = detail::split_context_turns(group[0].context);
    for (auto& l : group) r.dialogue.candidates.push_back(l.candidate);
    r.dialogue.positive_index = positive;
    r.validate();
    out.push_back(std::move(r));
    ++stats.records;
    group.clear();
  };

  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos
                                            : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      ++stats.skipped_malformed;
      continue;
    }
    Line l;
    l.context = line.substr(0, t1);
    l.candidate = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string label_str = line.substr(t2 + 1);
    if (label_str != "0" && label_str != "1") {
      ++stats.skipped_malformed;
      continue;
    }
    l.label = label_str == "1" ? 1 : 0;
    if (!eval_mode) {
      if (l.label == 1) {
        CorpusRecord r;
        r.split = split;
        r.dialogue.context = detail::split_context_turns(l.context);
        r.dialogue.candidates = {l.candidate};
        r.dialogue.positive_index = 0;
        out.push_back(std::move(r));
        ++stats.records;
      } else {
        ++stats.skipped_negative_pairs;
      }
      continue;
    }
    if (!group.empty() && group[0].context != l.context) flush_group();
    group.push_back(std::move(l));
    if (group.size() == group_size) flush_group();
  }
  flush_group();
  return {out, stats};
}

} // namespace ranklab
