#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "sbm/errors.hpp"

namespace sbm {

/// One factor of a block product: X_label^exponent.
struct Letter {
  int label = 0;
  int exponent = 0;
  bool operator==(const Letter&) const = default;
};

/// Canonical relabeled block product: labels appear in first-occurrence order
/// starting at 1 and adjacent letters carry distinct labels.
struct Word {
  std::vector<Letter> letters;

  bool operator==(const Word&) const = default;

  /// Number of distinct blocks s.
  int distinct_labels() const {
    int s = 0;
    for (const auto& l : letters) s = std::max(s, l.label);
    return s;
  }

  /// Total letter count P (sum of exponents).
  int total_exponent() const {
    int p = 0;
    for (const auto& l : letters) p += l.exponent;
    return p;
  }

  /// Total exponent r_k per label, index 0 holding r_1.
  std::vector<int> label_exponents() const {
    std::vector<int> r(distinct_labels(), 0);
    for (const auto& l : letters) r[l.label - 1] += l.exponent;
    return r;
  }

  /// Expansion into one label per step position.
  std::vector<int> expand() const {
    std::vector<int> seq;
    seq.reserve(total_exponent());
    for (const auto& l : letters) {
      for (int k = 0; k < l.exponent; ++k) seq.push_back(l.label);
    }
    return seq;
  }

  /// Grammar "label^exponent" space-separated, exponent omitted when 1,
  /// e.g. "1^3 2 3^2 2 1".
  std::string str() const {
    std::string out;
    for (const auto& l : letters) {
      if (!out.empty()) out += ' ';
      out += std::to_string(l.label);
      if (l.exponent != 1) out += '^' + std::to_string(l.exponent);
    }
    return out;
  }

  static Word parse(const std::string& text) {
    Word w;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && text[i] == ' ') ++i;
      if (i >= text.size()) break;
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ') ++j;
      const std::string tok = text.substr(i, j - i);
      const auto caret = tok.find('^');
      Letter l;
      l.label = std::stoi(tok.substr(0, caret));
      l.exponent = caret == std::string::npos ? 1 : std::stoi(tok.substr(caret + 1));
      if (l.label < 1 || l.exponent < 1) throw SpecError("word: bad letter '" + tok + "'");
      w.letters.push_back(l);
      i = j;
    }
    return w;
  }
};

namespace detail {

/// Rename identifiers to 1,2,3,... by first occurrence.
template <class T>
std::vector<int> relabel_first_occurrence(std::span<const T> seq) {
  std::vector<T> seen;
  std::vector<int> out;
  out.reserve(seq.size());
  for (const T& v : seq) {
    auto it = std::find(seen.begin(), seen.end(), v);
    if (it == seen.end()) {
      seen.push_back(v);
      out.push_back(static_cast<int>(seen.size()));
    } else {
      out.push_back(static_cast<int>(it - seen.begin()) + 1);
    }
  }
  return out;
}

inline Word merge_runs(std::span<const int> seq) {
  Word w;
  for (int v : seq) {
    if (!w.letters.empty() && w.letters.back().label == v) {
      ++w.letters.back().exponent;
    } else {
      w.letters.push_back({v, 1});
    }
  }
  return w;
}

}  // namespace detail

/// Relabel a sequence of block identifiers by first occurrence and merge runs
/// of equal labels into exponents.
template <class T>
Word canonical_word(std::span<const T> identifiers) {
  if (identifiers.empty()) throw SpecError("canonical_word: empty sequence");
  const auto relabeled = detail::relabel_first_occurrence(identifiers);
  return detail::merge_runs(relabeled);
}

inline Word canonical_word(const std::vector<int>& identifiers) {
  return canonical_word(std::span<const int>(identifiers));
}

/// Canonical representative of a closed (cyclic) block product: the
/// lexicographically smallest first-occurrence relabeling over all rotations
/// of the step sequence. Traces are cyclic, so walks that differ by a
/// rotation carry the same weight.
inline Word cyclic_canonical_word(std::span<const int> identifiers) {
  if (identifiers.empty()) throw SpecError("cyclic_canonical_word: empty sequence");
  const std::size_t n = identifiers.size();
  std::vector<int> rotated(n);
  std::vector<int> best;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < n; ++k) rotated[k] = identifiers[(r + k) % n];
    auto candidate = detail::relabel_first_occurrence(std::span<const int>(rotated));
    if (best.empty() || candidate < best) best = std::move(candidate);
  }
  return detail::merge_runs(best);
}

enum class WordClass { NonCrossing, Crossing };

/// A word is crossing when two labels interleave: positions a<b<c<d with
/// {a,c} on one label and {b,d} on another. Tested pairwise on the expanded
/// step positions; a label pair crosses exactly when its merged position
/// sequence alternates through four or more label groups.
inline WordClass classify_word(const Word& w) {
  const auto seq = w.expand();
  const int s = w.distinct_labels();
  for (int l1 = 1; l1 <= s; ++l1) {
    for (int l2 = l1 + 1; l2 <= s; ++l2) {
      int groups = 0;
      int last = 0;
      for (int v : seq) {
        if (v != l1 && v != l2) continue;
        if (v != last) {
          ++groups;
          last = v;
        }
      }
      if (groups >= 4) return WordClass::Crossing;
    }
  }
  return WordClass::NonCrossing;
}

}  // namespace sbm
