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
#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ranklab/common.hpp"

namespace ranklab {

/// Token table with fixed reserved ids. Text tokens are lowercased words;
/// reserved tokens keep their bracketed uppercase spelling.
class Vocab {
public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kSpk1 = 5;
  static constexpr int kSpk2 = 6;
  static constexpr int kNumReserved = 7;

  Vocab() {
    for (const char* t :
         {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[SPK1]", "[SPK2]"})
      add(t);
  }

  int add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    ids_.emplace(token, id);
    tokens_.push_back(token);
    return id;
  }

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  const std::string& token(int id) const {
    check(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(),
          "vocab: id ", id, " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }

  static bool is_reserved(int id) { return id >= 0 && id < kNumReserved; }

  /// One token per line; the line number is the id.
  void save(const std::string& path) const {
    std::ofstream os(path);
    check_config(os.good(), "vocab: cannot write ", path);
    for (const auto& t : tokens_) os << t << "\n";
  }

  static Vocab load(const std::string& path) {
    std::ifstream is(path);
    check_config(is.good(), "vocab: cannot open ", path);
    Vocab v;
    std::string line;
    int idx = 0;
    while (std::getline(is, line)) {
      if (idx < kNumReserved) {
        check_config(line == v.tokens_[static_cast<std::size_t>(idx)],
                     "vocab: reserved token mismatch at line ", idx, ": got '",
                     line, "'");
      } else {
        v.add(line);
      }
      ++idx;
    }
    check_config(idx >= kNumReserved, "vocab: ", path,
                 " too short to hold the reserved tokens");
    return v;
  }

private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> tokens_;
};

/// Lowercase + whitespace-split word list; does not touch the vocab.
inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

/// Deterministic whitespace-plus-lowercase tokenization; unknown words map
/// to [UNK]. Empty text yields an empty sequence.
inline std::vector<int> tokenize(const std::string& text, const Vocab& vocab) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

inline std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

struct Utterance {
  int speaker = 1; // 1 or 2
  std::string text;
};

struct Dialogue {
  std::vector<Utterance> context;       // u_1 .. u_N, oldest first
  std::vector<std::string> candidates;  // r_1 .. r_M
  std::optional<int> positive_index;    // in [0, M) when labeled
};

enum class PositionScheme { Repeated, Sequential };

inline PositionScheme position_scheme_from_string(const std::string& s) {
  if (s == "repeated") return PositionScheme::Repeated;
  if (s == "sequential") return PositionScheme::Sequential;
  throw ConfigError("unknown position scheme '" + s +
                    "' (expected repeated|sequential)");
}

inline const char* to_string(PositionScheme s) {
  return s == PositionScheme::Repeated ? "repeated" : "sequential";
}

/// Half-open index range [begin, end) into an assembled sequence.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t width() const { return end - begin; }
};

/// One assembled sequence:
///   [SPKx] u_1 ... [SPKy] u_N  then per candidate  [CLS] r_i [SEP]
/// Candidates share a fixed span width; shorter ones are right-padded inside
/// their span and the pad positions are flagged in pad_mask.
struct EncodedRow {
  std::vector<int> token_ids;
  std::vector<int> position_ids;
  std::vector<int> segment_ids;           // 0 = context, 1 = candidate
  std::vector<std::uint8_t> pad_mask;     // 1 = padding
  std::vector<Span> candidate_spans;      // ordered, disjoint
  std::size_t context_len = 0;            // L_c
  std::size_t truncated_candidates = 0;   // warning counter

  std::size_t seq_len() const { return token_ids.size(); }
};

namespace detail {

inline std::vector<std::vector<int>> context_token_lists(const Dialogue& d,
                                                         const Vocab& vocab) {
  std::vector<std::vector<int>> lists;
  lists.reserve(d.context.size());
  for (std::size_t i = 0; i < d.context.size(); ++i) {
    const Utterance& u = d.context[i];
    int spk = u.speaker == 2 ? Vocab::kSpk2 : Vocab::kSpk1;
    if (u.speaker != 1 && u.speaker != 2)
      spk = (i % 2 == 0) ? Vocab::kSpk1 : Vocab::kSpk2;
    std::vector<int> toks{spk};
    for (int id : tokenize(u.text, vocab)) toks.push_back(id);
    lists.push_back(std::move(toks));
  }
  return lists;
}

} // namespace detail

struct AssembleOptions {
  PositionScheme scheme = PositionScheme::Repeated;
  std::size_t max_len = 512;
  /// Span width shared across a batch: max candidate length in the batch
  /// plus [CLS]/[SEP]. 0 means derive from this dialogue alone.
  std::size_t span_width = 0;
};

inline std::size_t candidate_span_width(const Dialogue& d, const Vocab& vocab) {
  std::size_t w = 0;
  for (const auto& cand : d.candidates)
    w = std::max(w, tokenize(cand, vocab).size());
  return w + 2; // [CLS] ... [SEP]
}

/// Assemble one dialogue into an encoded row. Context is truncated from the
/// left (oldest utterances dropped first) to fit max_len; candidates longer
/// than the span width are truncated with a warning count.
inline EncodedRow assemble(const Dialogue& d, const Vocab& vocab,
                           const AssembleOptions& opt = {}) {
  check(!d.candidates.empty(), "assemble: dialogue has no candidates");
  check(!d.context.empty(), "assemble: dialogue has no context");
  const std::size_t m = d.candidates.size();
  std::size_t width = opt.span_width ? opt.span_width
                                     : candidate_span_width(d, vocab);
  // Shrink the span width if the candidates alone would overflow max_len;
  // over-long candidates are then truncated below.
  if (m * width >= opt.max_len) width = (opt.max_len - 1) / m;
  check(width >= 3, "assemble: span width ", width, " too small for [CLS]/[SEP] plus one token (M=",
        m, ", max_len=", opt.max_len, ")");

  auto ctx_lists = detail::context_token_lists(d, vocab);
  std::size_t ctx_total = 0;
  for (const auto& l : ctx_lists) ctx_total += l.size();
  // Drop oldest utterances until everything fits.
  std::size_t first = 0;
  while (first + 1 < ctx_lists.size() &&
         ctx_total + m * width > opt.max_len) {
    ctx_total -= ctx_lists[first].size();
    ++first;
  }
  std::size_t trunc_warnings = 0;
  if (ctx_total + m * width > opt.max_len) {
    // A single oversized utterance: keep its most recent tokens.
    std::size_t budget = opt.max_len - m * width;
    check(budget >= 1, "assemble: no room left for context");
    auto& last = ctx_lists[first];
    if (last.size() > budget)
      last.erase(last.begin(), last.end() - static_cast<long>(budget));
    ctx_total = last.size();
  }

  EncodedRow row;
  for (std::size_t i = first; i < ctx_lists.size(); ++i)
    for (int id : ctx_lists[i]) row.token_ids.push_back(id);
  row.context_len = row.token_ids.size();
  for (std::size_t p = 0; p < row.context_len; ++p) {
    row.position_ids.push_back(static_cast<int>(p));
    row.segment_ids.push_back(0);
    row.pad_mask.push_back(0);
  }

  const std::size_t lc = row.context_len;
  std::size_t next_sequential = lc;
  for (std::size_t ci = 0; ci < m; ++ci) {
    std::vector<int> cand = tokenize(d.candidates[ci], vocab);
    if (cand.size() > width - 2) {
      cand.resize(width - 2);
      ++trunc_warnings;
    }
    Span span{row.token_ids.size(), row.token_ids.size() + width};
    std::vector<int> toks{Vocab::kCls};
    for (int id : cand) toks.push_back(id);
    toks.push_back(Vocab::kSep);
    const std::size_t filled = toks.size();
    toks.resize(width, Vocab::kPad);
    for (std::size_t j = 0; j < width; ++j) {
      row.token_ids.push_back(toks[j]);
      const int pos = opt.scheme == PositionScheme::Repeated
                          ? static_cast<int>(lc + j)
                          : static_cast<int>(next_sequential + j);
      row.position_ids.push_back(pos);
      row.segment_ids.push_back(1);
      row.pad_mask.push_back(j >= filled ? 1 : 0);
    }
    next_sequential += width;
    row.candidate_spans.push_back(span);
  }
  row.truncated_candidates = trunc_warnings;
  check(row.seq_len() <= opt.max_len, "assemble: internal length overflow");
  return row;
}

/// Context-only row (for the paradigms that encode context separately).
inline EncodedRow assemble_context_only(const Dialogue& d, const Vocab& vocab,
                                        std::size_t max_len = 512) {
  check(!d.context.empty(), "assemble: dialogue has no context");
  auto ctx_lists = detail::context_token_lists(d, vocab);
  std::size_t total = 0;
  for (const auto& l : ctx_lists) total += l.size();
  std::size_t first = 0;
  while (first + 1 < ctx_lists.size() && total > max_len) {
    total -= ctx_lists[first].size();
    ++first;
  }
  EncodedRow row;
  for (std::size_t i = first; i < ctx_lists.size(); ++i)
    for (int id : ctx_lists[i]) row.token_ids.push_back(id);
  if (row.token_ids.size() > max_len)
    row.token_ids.erase(row.token_ids.begin(),
                        row.token_ids.end() - static_cast<long>(max_len));
  row.context_len = row.token_ids.size();
  for (std::size_t p = 0; p < row.context_len; ++p) {
    row.position_ids.push_back(static_cast<int>(p));
    row.segment_ids.push_back(0);
    row.pad_mask.push_back(0);
  }
  return row;
}

/// Candidates-only row: M spans, no context region, positions restart at 0
/// in every span (independent encodings batched into one sequence).
inline EncodedRow assemble_candidates_only(const Dialogue& d, const Vocab& vocab,
                                           std::size_t max_len = 512,
                                           std::size_t span_width = 0) {
  check(!d.candidates.empty(), "assemble: dialogue has no candidates");
  Dialogue with_stub = d;
  with_stub.context = {Utterance{1, ""}};
  AssembleOptions opt;
  opt.scheme = PositionScheme::Repeated;
  opt.max_len = max_len;
  opt.span_width = span_width;
  EncodedRow row = assemble(with_stub, vocab, opt);
  // Strip the stub context token ([SPK1]) and rebase spans/positions.
  const std::size_t lc = row.context_len;
  row.token_ids.erase(row.token_ids.begin(),
                      row.token_ids.begin() + static_cast<long>(lc));
  row.position_ids.erase(row.position_ids.begin(),
                         row.position_ids.begin() + static_cast<long>(lc));
  row.segment_ids.erase(row.segment_ids.begin(),
                        row.segment_ids.begin() + static_cast<long>(lc));
  row.pad_mask.erase(row.pad_mask.begin(),
                     row.pad_mask.begin() + static_cast<long>(lc));
  for (auto& pos : row.position_ids) pos -= static_cast<int>(lc);
  for (auto& s : row.candidate_spans) {
    s.begin -= lc;
    s.end -= lc;
  }
  row.context_len = 0;
  return row;
}

} // namespace ranklab
