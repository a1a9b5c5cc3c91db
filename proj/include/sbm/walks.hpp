#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <vector>

#include "sbm/blocks.hpp"
#include "sbm/errors.hpp"
#include "sbm/tpoly.hpp"
#include "sbm/word.hpp"

namespace sbm {

/// One group of walks: multiplicity * Z^{z_power} * tr(word).
struct MomentTerm {
  int z_power = 0;
  Word word;
  std::int64_t multiplicity = 0;

  bool operator==(const MomentTerm&) const = default;
};

/// Expansion of mu_{2p} in powers of Z over canonical cyclic words.
struct MomentPolynomial {
  int half_order = 0;  ///< p; the moment is mu_{2p}
  std::vector<MomentTerm> terms;
};

namespace detail {

struct WalkEnumerator {
  int total_steps;
  std::vector<int> parent;                 // tree parent per vertex, root = 0
  std::vector<std::vector<int>> children;  // tree children per vertex
  std::vector<int> depth;
  std::vector<int> steps;  // edge ids (edge = child vertex) in traversal order
  std::map<std::pair<int, std::vector<int>>, std::int64_t>* acc;

  void record() {
    const int n_edges = static_cast<int>(parent.size()) - 1;
    const Word w = cyclic_canonical_word(steps);
    (*acc)[{n_edges, w.expand()}] += 1;
  }

  void walk(int current, int steps_taken) {
    const int remaining = total_steps - steps_taken;
    if (remaining == 0) {
      // Closed walk: all edge uses are even exactly when we are back at the
      // root (on a tree the odd-use edges are the root-to-current path).
      if (current == 0) record();
      return;
    }
    // The odd-use edges of a partial walk on a tree are exactly the edges of
    // the root-to-current path, so `depth[current]` steps are still owed.
    if (remaining < depth[current]) return;

    // Move to a brand-new vertex; it becomes the next child in canonical
    // labeling order, which makes each abstract walk appear exactly once.
    const int n_vertices = static_cast<int>(parent.size());
    if (n_vertices <= total_steps / 2 && remaining >= depth[current] + 2) {
      parent.push_back(current);
      children.push_back({});
      children[current].push_back(n_vertices);
      depth.push_back(depth[current] + 1);
      steps.push_back(n_vertices);
      walk(n_vertices, steps_taken + 1);
      steps.pop_back();
      depth.pop_back();
      children[current].pop_back();
      children.pop_back();
      parent.pop_back();
    }

    // Move along an existing incident tree edge: to the parent or a child.
    if (current != 0) {
      steps.push_back(current);
      walk(parent[current], steps_taken + 1);
      steps.pop_back();
    }
    for (int child : children[current]) {
      steps.push_back(child);
      walk(child, steps_taken + 1);
      steps.pop_back();
    }
  }
};

}  // namespace detail

/// All closed 2p-step walks from a root whose traversed edges form a tree and
/// are each used an even number of times, aggregated per (Z power, canonical
/// cyclic word). Terms are ordered by ascending Z power, then descending
/// multiplicity, then lexicographic step sequence, matching the customary way
/// the mu_8 expansion is displayed.
inline MomentPolynomial enumerate_tree_walks(int p) {
  if (p < 1 || p > 6) throw ResourceError("enumerate_tree_walks: p must be in 1..6");
  std::map<std::pair<int, std::vector<int>>, std::int64_t> acc;
  detail::WalkEnumerator e;
  e.total_steps = 2 * p;
  e.parent = {0};
  e.children = {{}};
  e.depth = {0};
  e.acc = &acc;
  e.walk(0, 0);

  MomentPolynomial mp;
  mp.half_order = p;
  for (const auto& [key, mult] : acc) {
    MomentTerm term;
    term.z_power = key.first;
    term.word = canonical_word(key.second);
    term.multiplicity = mult;
    mp.terms.push_back(std::move(term));
  }
  std::sort(mp.terms.begin(), mp.terms.end(), [](const MomentTerm& a, const MomentTerm& b) {
    if (a.z_power != b.z_power) return a.z_power < b.z_power;
    if (a.multiplicity != b.multiplicity) return a.multiplicity > b.multiplicity;
    return a.word.expand() < b.word.expand();
  });
  return mp;
}

/// d -> infinity limit at finite rank: crossing words drop out and every
/// non-crossing term contributes multiplicity * t^{z_power}.
inline TPoly finite_rank_limit(const MomentPolynomial& mp) {
  TPoly out;
  for (const auto& term : mp.terms) {
    if (classify_word(term.word) == WordClass::Crossing) continue;
    out += TPoly::monomial(term.z_power, BigInt(term.multiplicity));
  }
  return out;
}

/// Finite-d evaluation of the moment polynomial by Monte Carlo:
/// sum over terms of multiplicity * Z^l * (1/d) <tr word>, standard errors
/// combined in quadrature.
inline McEstimate evaluate_moment_polynomial(const MomentPolynomial& mp,
                                             const BlockMeasure& m, double connectivity,
                                             std::uint64_t n_samples, Rng& rng) {
  double value = 0.0;
  double var = 0.0;
  for (const auto& term : mp.terms) {
    const auto est = word_expectation_mc(m, term.word, n_samples, rng);
    const double scale =
        static_cast<double>(term.multiplicity) * std::pow(connectivity, term.z_power) / m.dim;
    value += scale * est.value;
    var += scale * scale * est.stderror * est.stderror;
  }
  return {value, std::sqrt(var), n_samples};
}

inline nlohmann::json to_json(const MomentPolynomial& mp) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& term : mp.terms) {
    terms.push_back({{"z", term.z_power},
                     {"word", term.word.str()},
                     {"mult", term.multiplicity}});
  }
  return {{"p", mp.half_order}, {"terms", terms}};
}

inline MomentPolynomial moment_polynomial_from_json(const nlohmann::json& j) {
  MomentPolynomial mp;
  mp.half_order = j.at("p").get<int>();
  for (const auto& item : j.at("terms")) {
    MomentTerm term;
    term.z_power = item.at("z").get<int>();
    term.word = Word::parse(item.at("word").get<std::string>());
    term.multiplicity = item.at("mult").get<std::int64_t>();
    mp.terms.push_back(std::move(term));
  }
  return mp;
}

}  // namespace sbm
