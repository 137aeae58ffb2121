#pragma once

#include "s2g/errors.hpp"
#include "s2g/textproc.hpp"

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

namespace s2g {

/// Additive n x n attention mask over {0, -inf}. Every row keeps at least
/// its diagonal entry at 0.
template <typename Scalar_>
class BasicAttentionMask {
 public:
  using Scalar = Scalar_;
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  static constexpr Scalar blocked() { return -std::numeric_limits<Scalar>::infinity(); }

  explicit BasicAttentionMask(int n) : entries_(MatrixType::Zero(n, n)) {}

  int size() const { return static_cast<int>(entries_.rows()); }
  bool allowed(int i, int j) const { return entries_(i, j) == Scalar(0); }
  void block(int i, int j) { entries_(i, j) = blocked(); }
  const MatrixType& entries() const { return entries_; }

  bool operator==(const BasicAttentionMask& other) const { return entries_ == other.entries_; }

 private:
  MatrixType entries_;
};

using AttentionMask = BasicAttentionMask<double>;

/// Binary supporting-sentence flags z, one per mapped sentence.
struct EvidenceSelection {
  std::vector<int> z;
  static EvidenceSelection all(int k, int value = 1) { return {std::vector<int>(static_cast<std::size_t>(k), value)}; }
};

template <typename Scalar = double>
BasicAttentionMask<Scalar> build_full_mask(int n) {
  if (n < 1) throw std::invalid_argument("build_full_mask: n must be >= 1");
  return BasicAttentionMask<Scalar>(n);
}

/// Sentence-aware self-attention. Position pairs are visible when both are
/// sentence placeholders, both are ordinary tokens, or both belong to the
/// same sentence (a placeholder belongs to its own sentence).
template <typename Scalar = double>
BasicAttentionMask<Scalar> build_sasa_mask(const SentenceMap& map, int n) {
  if (n < 1) throw std::invalid_argument("build_sasa_mask: n must be >= 1");
  map.validate(n);
  std::vector<char> is_placeholder(static_cast<std::size_t>(n), 0);
  for (int p : map.placeholder_positions) is_placeholder[static_cast<std::size_t>(p)] = 1;
  const auto& sig = map.token_to_sentence;

  BasicAttentionMask<Scalar> mask(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const bool same_class = is_placeholder[i] == is_placeholder[j];
      const bool same_sentence = sig[i] != SentenceMap::kNone && sig[i] == sig[j];
      if (!same_class && !same_sentence) mask.block(i, j);
    }
  }
  return mask;
}

/// Evidence-guided attention: tokens of unselected sentences neither see nor
/// are seen by anything but themselves. Unmapped positions (question,
/// specials, sentences past the cap) count as selected.
template <typename Scalar = double>
BasicAttentionMask<Scalar> build_ega_mask(const SentenceMap& map, const EvidenceSelection& selection, int n) {
  if (n < 1) throw std::invalid_argument("build_ega_mask: n must be >= 1");
  if (static_cast<int>(selection.z.size()) != map.sentence_count())
    throw ValidationError("build_ega_mask: selection has " + std::to_string(selection.z.size()) +
                          " flags for " + std::to_string(map.sentence_count()) + " sentences");
  if (static_cast<int>(map.token_to_sentence.size()) != n)
    throw ValidationError("build_ega_mask: sentence map length differs from n");
  std::vector<char> visible(static_cast<std::size_t>(n), 1);
  for (int i = 0; i < n; ++i) {
    const int s = map.token_to_sentence[static_cast<std::size_t>(i)];
    if (s != SentenceMap::kNone) visible[static_cast<std::size_t>(i)] = selection.z[static_cast<std::size_t>(s)] != 0;
  }
  BasicAttentionMask<Scalar> mask(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && !(visible[i] && visible[j])) mask.block(i, j);
    }
  }
  return mask;
}

/// Debug rendering: '.' for visible, '#' for blocked, one line per row.
template <typename Scalar>
std::string to_grid(const BasicAttentionMask<Scalar>& mask) {
  std::string out;
  for (int i = 0; i < mask.size(); ++i) {
    for (int j = 0; j < mask.size(); ++j) out += mask.allowed(i, j) ? '.' : '#';
    out += '\n';
  }
  return out;
}

}  // namespace s2g
