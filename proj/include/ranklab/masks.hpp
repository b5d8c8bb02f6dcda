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

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ranklab/common.hpp"
#include "ranklab/inputs.hpp"
#include "ranklab/tensor.hpp"

namespace ranklab {

/// The four attention regimes. One encoder simulates four ranking paradigms
/// by swapping these maps:
///   Square    — everything attends to everything (one candidate per pass
///               makes this the cross-encoding regime)
///   Arrow     — full context<->candidate attention, no direct
///               candidate<->candidate attention (the single-pass regime)
///   Diagonal  — context and candidates fully isolated (bi-encoding regime)
///   LightArrow— Diagonal at every layer plus a final light-weight
///               interaction through m learned context codes (poly regime)
enum class MaskKind { Diagonal, Arrow, LightArrow, Square };

inline MaskKind mask_kind_from_string(const std::string& s) {
  if (s == "diagonal") return MaskKind::Diagonal;
  if (s == "arrow") return MaskKind::Arrow;
  if (s == "light-arrow") return MaskKind::LightArrow;
  if (s == "square") return MaskKind::Square;
  throw ConfigError("unknown mask kind '" + s +
                    "' (expected diagonal|arrow|light-arrow|square)");
}

inline const char* to_string(MaskKind k) {
  switch (k) {
    case MaskKind::Diagonal: return "diagonal";
    case MaskKind::Arrow: return "arrow";
    case MaskKind::LightArrow: return "light-arrow";
    case MaskKind::Square: return "square";
  }
  return "?";
}

/// Per-layer attention maps (true = allowed). All current regimes use the
/// same map at every layer; LightArrow additionally carries the number of
/// context codes for the final light-weight interaction.
struct MaskSchedule {
  std::vector<BoolMatrix> layers;
  std::optional<int> light_codes;

  const BoolMatrix& layer(std::size_t i) const {
    check(i < layers.size(), "mask schedule: layer ", i, " out of range");
    return layers[i];
  }
};

struct MaskOptions {
  /// Arrow only: whether context rows may attend to candidate columns.
  /// Both variants are valid readings of the regime; bidirectional is the
  /// default.
  bool context_sees_candidates = true;
  /// LightArrow only: number of context codes (m >= 1).
  int light_codes = 4;
};

namespace detail {

inline bool in_any_span(std::size_t p, const std::vector<Span>& spans,
                        std::size_t* which = nullptr) {
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (p >= spans[i].begin && p < spans[i].end) {
      if (which) *which = i;
      return true;
    }
  }
  return false;
}

} // namespace detail

/// Build the T x T map for one layer of the given regime. Positions outside
/// the context region and every span (trailing padding) only attend to
/// themselves; in-span padding is handled by combining with the pad mask at
/// attention time.
inline BoolMatrix build_mask_layer(MaskKind kind, std::size_t context_len,
                                   const std::vector<Span>& spans,
                                   std::size_t seq_len,
                                   const MaskOptions& opt = {}) {
  for (std::size_t i = 0; i < spans.size(); ++i) {
    check(spans[i].begin >= context_len && spans[i].end <= seq_len &&
              spans[i].begin < spans[i].end,
          "build_mask: span ", i, " out of range");
    if (i + 1 < spans.size())
      check(spans[i].end <= spans[i + 1].begin,
            "build_mask: spans overlap or are unordered at index ", i);
  }
  BoolMatrix m(seq_len, seq_len, false);
  // region(p): context = -1, span i = i, trailing pad = -2
  auto region = [&](std::size_t p) -> long {
    if (p < context_len) return -1;
    std::size_t which = 0;
    if (detail::in_any_span(p, spans, &which)) return static_cast<long>(which);
    return -2;
  };
  for (std::size_t q = 0; q < seq_len; ++q) {
    const long rq = region(q);
    for (std::size_t k = 0; k < seq_len; ++k) {
      const long rk = region(k);
      bool allowed = false;
      if (q == k) {
        allowed = true;
      } else if (rq == -2 || rk == -2) {
        allowed = false;
      } else {
        switch (kind) {
          case MaskKind::Square:
            allowed = true;
            break;
          case MaskKind::Diagonal:
          case MaskKind::LightArrow:
            allowed = (rq == rk); // same region: context block or same span
            break;
          case MaskKind::Arrow:
            if (rq == rk) allowed = true;                   // within region
            else if (rq >= 0 && rk == -1) allowed = true;   // candidate -> context
            else if (rq == -1 && rk >= 0)
              allowed = opt.context_sees_candidates;        // context -> candidate
            else allowed = false;                           // candidate_i -> candidate_j
            break;
        }
      }
      m.set(q, k, allowed);
    }
  }
  return m;
}

/// Per-layer schedule for an encoder with `layers` layers.
inline MaskSchedule build_mask(MaskKind kind, std::size_t context_len,
                               const std::vector<Span>& spans,
                               std::size_t seq_len, int layers,
                               const MaskOptions& opt = {}) {
  check(layers >= 1, "build_mask: need at least one layer");
  if (kind == MaskKind::LightArrow)
    check(opt.light_codes >= 1, "build_mask: light-arrow needs m >= 1 codes");
  BoolMatrix layer = build_mask_layer(kind, context_len, spans, seq_len, opt);
  MaskSchedule sched;
  sched.layers.assign(static_cast<std::size_t>(layers), layer);
  if (kind == MaskKind::LightArrow) sched.light_codes = opt.light_codes;
  return sched;
}

/// Closed-form count of allowed attention pairs for a context of length
/// context_len and M candidate spans of uniform width cand_len (no padding).
/// Matches enumeration of build_mask_layer exactly.
inline std::uint64_t allowed_pairs(MaskKind kind, std::uint64_t context_len,
                                   std::uint64_t cand_len, std::uint64_t m,
                                   bool context_sees_candidates = true) {
  check(context_len >= 1 && cand_len >= 1 && m >= 1,
        "allowed_pairs: all arguments must be >= 1");
  const std::uint64_t lc = context_len, lr = cand_len;
  const std::uint64_t t = lc + m * lr;
  switch (kind) {
    case MaskKind::Square:
      return t * t;
    case MaskKind::Diagonal:
    case MaskKind::LightArrow:
      return lc * lc + m * lr * lr;
    case MaskKind::Arrow: {
      const std::uint64_t context_rows =
          context_sees_candidates ? lc * t : lc * lc;
      return context_rows + m * lr * (lc + lr);
    }
  }
  return 0;
}

/// Attention pairs for scoring one context against M candidates when each
/// candidate is encoded in its own pass over [context ; candidate]
/// (the cross-encoding cost model): M * (L_c + L_r)^2.
inline std::uint64_t cross_passes_pairs(std::uint64_t context_len,
                                        std::uint64_t cand_len,
                                        std::uint64_t m) {
  const std::uint64_t per = (context_len + cand_len) * (context_len + cand_len);
  return m * per;
}

inline std::string render_ascii(const BoolMatrix& m) {
  std::string out;
  out.reserve((m.cols + 1) * m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) out += m.at(r, c) ? '#' : '.';
    out += '\n';
  }
  return out;
}

/// Plain (P2) portable graymap; allowed cells are ink (0), blocked white.
inline void write_pgm(const BoolMatrix& m, std::ostream& os) {
  os << "P2\n" << m.cols << " " << m.rows << "\n255\n";
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) os << ' ';
      os << (m.at(r, c) ? 0 : 255);
    }
    os << '\n';
  }
}

} // namespace ranklab
