#pragma once

// Direct case-by-case transcription of the two mask definitions, written
// without the builders' helpers. Shared by the unit and acceptance tests.

#include "s2g/masks.hpp"
#include "s2g/random.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace s2g::oracle {

inline constexpr double kNeg = -std::numeric_limits<double>::infinity();

struct Instance {
  int n = 0;
  SentenceMap map;
  std::vector<int> z;
};

inline bool is_placeholder(const SentenceMap& m, int i) {
  return std::find(m.placeholder_positions.begin(), m.placeholder_positions.end(), i) != m.placeholder_positions.end();
}

// M(i,j) = 0 if i,j in T_s, or i,j in T_w, or g(i,j) = 1; -inf otherwise.
inline double sasa(const SentenceMap& m, int i, int j) {
  const bool si = is_placeholder(m, i), sj = is_placeholder(m, j);
  if (si && sj) return 0.0;
  if (!si && !sj) return 0.0;
  const int a = m.token_to_sentence[static_cast<std::size_t>(i)];
  const int b = m.token_to_sentence[static_cast<std::size_t>(j)];
  if (a != SentenceMap::kNone && a == b) return 0.0;
  return kNeg;
}

// M(i,j) = -inf if z_sigma(i) = 0 or z_sigma(j) = 0, else 0; NONE counts
// as selected and the diagonal stays 0.
inline double ega(const SentenceMap& m, const std::vector<int>& z, int i, int j) {
  if (i == j) return 0.0;
  auto selected = [&](int t) {
    const int s = m.token_to_sentence[static_cast<std::size_t>(t)];
    return s == SentenceMap::kNone || z[static_cast<std::size_t>(s)] == 1;
  };
  if (!selected(i) || !selected(j)) return kNeg;
  return 0.0;
}

/// Random layout of length n <= 20 with up to 4 sentences. Sentences are
/// contiguous runs starting with their placeholder; the other positions
/// are NONE.
inline Instance random_instance(Rng& rng) {
  Instance inst;
  inst.n = 1 + static_cast<int>(uniform_index(rng, 20));
  const int k = static_cast<int>(uniform_index(rng, 5));
  auto& m = inst.map;
  m.token_to_sentence.assign(static_cast<std::size_t>(inst.n), SentenceMap::kNone);
  int pos = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(inst.n)));
  for (int s = 0; s < k && pos < inst.n; ++s) {
    const int remaining = inst.n - pos;
    const int len = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(std::min(remaining, 6))));
    m.sentence_spans.push_back({pos, pos + len});
    m.placeholder_positions.push_back(pos);
    for (int t = pos; t < pos + len; ++t) m.token_to_sentence[static_cast<std::size_t>(t)] = s;
    pos += len + static_cast<int>(uniform_index(rng, 3));
  }
  for (int s = 0; s < m.sentence_count(); ++s) inst.z.push_back(static_cast<int>(uniform_index(rng, 2)));
  return inst;
}

/// Number of instances (out of `count`) where a builder disagrees with the
/// transcription in any entry.
inline int mismatches(int count, std::uint64_t seed) {
  Rng rng(seed);
  int bad = 0;
  for (int trial = 0; trial < count; ++trial) {
    const Instance inst = random_instance(rng);
    const auto s = build_sasa_mask(inst.map, inst.n);
    const auto e = build_ega_mask(inst.map, EvidenceSelection{inst.z}, inst.n);
    bool ok = true;
    for (int i = 0; i < inst.n && ok; ++i) {
      for (int j = 0; j < inst.n && ok; ++j) {
        ok = s.entries()(i, j) == sasa(inst.map, i, j) && e.entries()(i, j) == ega(inst.map, inst.z, i, j);
      }
    }
    bad += ok ? 0 : 1;
  }
  return bad;
}

}  // namespace s2g::oracle
