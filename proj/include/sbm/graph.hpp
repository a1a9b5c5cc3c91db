#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "sbm/errors.hpp"
#include "sbm/rng.hpp"

namespace sbm {

enum class GraphFamily { ErdosRenyi, Regular };

/// Skeleton of the sparse ensemble: N vertices with mean (or exact) degree Z.
struct GraphSpec {
  int n_vertices = 0;
  double mean_degree = 0.0;
  GraphFamily family = GraphFamily::ErdosRenyi;

  void validate() const {
    if (n_vertices <= 0) throw SpecError("graph: n_vertices must be positive");
    if (mean_degree < 0.0) throw SpecError("graph: mean_degree must be nonnegative");
    if (family == GraphFamily::ErdosRenyi) {
      if (mean_degree > static_cast<double>(n_vertices)) {
        throw SpecError("graph: edge probability Z/N exceeds 1");
      }
    } else {
      const double zi = std::round(mean_degree);
      if (std::abs(mean_degree - zi) > 0.0) {
        throw SpecError("graph: regular graphs need an integer degree");
      }
      const long z = static_cast<long>(zi);
      if (z >= n_vertices) throw SpecError("graph: regular degree must be < N");
      if ((static_cast<long>(n_vertices) * z) % 2 != 0) {
        throw SpecError("graph: N*Z must be even for a regular graph");
      }
    }
  }
};

/// Undirected simple edge list; pairs stored as (min, max) and kept sorted so
/// iteration order is deterministic.
struct EdgeSet {
  int n_vertices = 0;
  std::vector<std::pair<int, int>> edges;

  bool operator==(const EdgeSet&) const = default;
};

/// Erdos-Renyi skeleton: each of the N(N-1)/2 pairs appears independently
/// with probability Z/N.
inline EdgeSet sample_er_edges(const GraphSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.family != GraphFamily::ErdosRenyi) {
    throw SpecError("sample_er_edges: spec is not Erdos-Renyi");
  }
  const double p = spec.mean_degree / static_cast<double>(spec.n_vertices);
  EdgeSet out;
  out.n_vertices = spec.n_vertices;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < spec.n_vertices; ++i) {
    for (int j = i + 1; j < spec.n_vertices; ++j) {
      if (u(rng) < p) out.edges.emplace_back(i, j);
    }
  }
  return out;
}

/// Random Z-regular simple graph via stub pairing. Stubs are matched one at a
/// time against a uniformly chosen legal partner; if a partial pairing dead-ends
/// (no legal partner left) the whole sample is restarted. Keeps every accepted
/// sample simple and exactly regular, and stays fast for Z up to ~32.
inline EdgeSet sample_regular_edges(const GraphSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.family != GraphFamily::Regular) {
    throw SpecError("sample_regular_edges: spec is not Regular");
  }
  const int n = spec.n_vertices;
  const int z = static_cast<int>(std::round(spec.mean_degree));

  EdgeSet out;
  out.n_vertices = n;
  if (z == 0) return out;

  std::vector<int> stubs;
  stubs.reserve(static_cast<std::size_t>(n) * z);
  std::vector<char> adj(static_cast<std::size_t>(n) * n);

  for (int attempt = 0; attempt < 10000; ++attempt) {
    stubs.clear();
    for (int v = 0; v < n; ++v) {
      for (int k = 0; k < z; ++k) stubs.push_back(v);
    }
    std::shuffle(stubs.begin(), stubs.end(), rng);
    std::fill(adj.begin(), adj.end(), 0);
    out.edges.clear();

    bool dead_end = false;
    while (!stubs.empty() && !dead_end) {
      const int a = stubs.back();
      stubs.pop_back();
      int pick = -1;
      std::uniform_int_distribution<std::size_t> d(0, stubs.size() - 1);
      for (int tries = 0; tries < 200; ++tries) {
        const std::size_t s = d(rng);
        const int b = stubs[s];
        if (b != a && !adj[static_cast<std::size_t>(a) * n + b]) {
          pick = static_cast<int>(s);
          break;
        }
      }
      if (pick < 0) {
        // Conflicts dominate; fall back to a uniform choice over the legal set.
        std::vector<int> legal;
        for (std::size_t s = 0; s < stubs.size(); ++s) {
          const int b = stubs[s];
          if (b != a && !adj[static_cast<std::size_t>(a) * n + b]) {
            legal.push_back(static_cast<int>(s));
          }
        }
        if (legal.empty()) {
          dead_end = true;
          break;
        }
        std::uniform_int_distribution<std::size_t> dl(0, legal.size() - 1);
        pick = legal[dl(rng)];
      }
      const int b = stubs[static_cast<std::size_t>(pick)];
      stubs.erase(stubs.begin() + pick);
      adj[static_cast<std::size_t>(a) * n + b] = 1;
      adj[static_cast<std::size_t>(b) * n + a] = 1;
      out.edges.emplace_back(std::min(a, b), std::max(a, b));
    }
    if (!dead_end) {
      std::sort(out.edges.begin(), out.edges.end());
      return out;
    }
  }
  throw ResourceError("sample_regular_edges: pairing failed to converge");
}

inline std::vector<int> vertex_degrees(const EdgeSet& e) {
  std::vector<int> deg(e.n_vertices, 0);
  for (const auto& [i, j] : e.edges) {
    ++deg[i];
    ++deg[j];
  }
  return deg;
}

}  // namespace sbm
