#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sbm/errors.hpp"
#include "sbm/rng.hpp"
#include "sbm/stats.hpp"
#include "sbm/word.hpp"

namespace sbm {

enum class MeasureFamily {
  RankOneSphere,
  RankOneBall,
  RankOneGauss,
  RankOneCube,
  RankROrthogonal,
  RankRIndependent,
  FullFixedTrace,
  FullBoundedTrace,
  FullGauss,
};

inline bool is_vector_family(MeasureFamily f) {
  return f != MeasureFamily::FullFixedTrace && f != MeasureFamily::FullBoundedTrace &&
         f != MeasureFamily::FullGauss;
}

inline std::string measure_family_name(MeasureFamily f) {
  switch (f) {
    case MeasureFamily::RankOneSphere: return "sphere";
    case MeasureFamily::RankOneBall: return "ball";
    case MeasureFamily::RankOneGauss: return "gauss";
    case MeasureFamily::RankOneCube: return "cube";
    case MeasureFamily::RankROrthogonal: return "orthogonal";
    case MeasureFamily::RankRIndependent: return "independent";
    case MeasureFamily::FullFixedTrace: return "fixed-trace";
    case MeasureFamily::FullBoundedTrace: return "bounded-trace";
    case MeasureFamily::FullGauss: return "full-gauss";
  }
  return "?";
}

/// Distribution of one d x d real symmetric random block.
struct BlockMeasure {
  int dim = 1;                ///< block dimension d
  MeasureFamily family = MeasureFamily::RankOneSphere;
  int rank = 1;               ///< r; 1 for RankOne*, d for Full*
  double radius = 1.0;        ///< R
  std::vector<double> radii;  ///< per-vector norms R_a (RankRIndependent); empty = all R

  static BlockMeasure rank_one(MeasureFamily f, int d, double r = 1.0) {
    return BlockMeasure{d, f, 1, r, {}};
  }
  static BlockMeasure orthogonal(int d, int rank, double r = 1.0) {
    return BlockMeasure{d, MeasureFamily::RankROrthogonal, rank, r, {}};
  }
  static BlockMeasure independent(int d, int rank, double r = 1.0,
                                  std::vector<double> radii = {}) {
    return BlockMeasure{d, MeasureFamily::RankRIndependent, rank, r, std::move(radii)};
  }
  static BlockMeasure full(MeasureFamily f, int d, double r = 1.0) {
    return BlockMeasure{d, f, d, r, {}};
  }

  int effective_rank() const { return is_vector_family(family) ? rank : dim; }

  std::vector<double> vector_norms() const {
    if (!radii.empty()) return radii;
    return std::vector<double>(static_cast<std::size_t>(rank), radius);
  }

  void validate() const {
    if (dim < 1) throw SpecError("measure: dim must be positive");
    if (rank < 1) throw SpecError("measure: rank must be positive");
    if (radius <= 0.0) throw SpecError("measure: radius must be positive");
    for (double r : radii) {
      if (r <= 0.0) throw SpecError("measure: all radii must be positive");
    }
    switch (family) {
      case MeasureFamily::RankOneSphere:
      case MeasureFamily::RankOneBall:
      case MeasureFamily::RankOneGauss:
      case MeasureFamily::RankOneCube:
        if (rank != 1) throw SpecError("measure: rank-one family requires rank 1");
        break;
      case MeasureFamily::RankROrthogonal:
        if (rank > dim) throw SpecError("measure: orthogonal set needs rank <= dim");
        break;
      case MeasureFamily::RankRIndependent:
        if (rank > dim) throw SpecError("measure: rank must not exceed dim");
        if (!radii.empty() && static_cast<int>(radii.size()) != rank) {
          throw SpecError("measure: radii list must have one entry per vector");
        }
        break;
      case MeasureFamily::FullFixedTrace:
      case MeasureFamily::FullBoundedTrace:
      case MeasureFamily::FullGauss:
        if (rank != dim) throw SpecError("measure: full-rank family requires rank == dim");
        break;
    }
  }
};

using SymmetricBlock = Eigen::MatrixXd;

/// One sampled block, kept in factored form X = F F^T for the vector
/// families so that traces of long products stay cheap.
struct BlockDraw {
  bool factored = false;
  Eigen::MatrixXd factors;  ///< d x r when factored
  Eigen::MatrixXd dense;    ///< d x d when not factored

  SymmetricBlock to_dense() const {
    if (!factored) return dense;
    const int d = static_cast<int>(factors.rows());
    SymmetricBlock x = SymmetricBlock::Zero(d, d);
    x.selfadjointView<Eigen::Lower>().rankUpdate(factors);
    x.triangularView<Eigen::StrictlyUpper>() = x.transpose();
    return x;
  }
};

namespace detail {

inline Eigen::VectorXd gaussian_vector(int d, double sigma, Rng& rng) {
  std::normal_distribution<double> nd(0.0, sigma);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = nd(rng);
  return v;
}

inline Eigen::VectorXd sphere_vector(int d, double r, Rng& rng) {
  Eigen::VectorXd v = gaussian_vector(d, 1.0, rng);
  double n = v.norm();
  while (n == 0.0) {
    v = gaussian_vector(d, 1.0, rng);
    n = v.norm();
  }
  return v * (r / n);
}

/// Symmetric Gaussian draw matching exp(-(d/4R^2) tr X^2): diagonal variance
/// 2R^2/d, off-diagonal variance R^2/d.
inline Eigen::MatrixXd gauss_symmetric(int d, double r, Rng& rng) {
  std::normal_distribution<double> diag(0.0, r * std::sqrt(2.0 / d));
  std::normal_distribution<double> off(0.0, r / std::sqrt(static_cast<double>(d)));
  Eigen::MatrixXd x(d, d);
  for (int i = 0; i < d; ++i) {
    x(i, i) = diag(rng);
    for (int j = i + 1; j < d; ++j) {
      const double v = off(rng);
      x(i, j) = v;
      x(j, i) = v;
    }
  }
  return x;
}

}  // namespace detail

/// Draw one block. Vector families return the factored form.
inline BlockDraw draw_block(const BlockMeasure& m, Rng& rng) {
  m.validate();
  const int d = m.dim;
  const double r = m.radius;
  BlockDraw out;
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  switch (m.family) {
    case MeasureFamily::RankOneSphere: {
      out.factored = true;
      out.factors = detail::sphere_vector(d, r, rng);
      break;
    }
    case MeasureFamily::RankOneBall: {
      out.factored = true;
      const double radial = r * std::pow(u01(rng), 1.0 / d);
      out.factors = detail::sphere_vector(d, radial, rng);
      break;
    }
    case MeasureFamily::RankOneGauss: {
      out.factored = true;
      out.factors = detail::gaussian_vector(d, r / std::sqrt(static_cast<double>(d)), rng);
      break;
    }
    case MeasureFamily::RankOneCube: {
      out.factored = true;
      std::uniform_real_distribution<double> uc(-r, r);
      Eigen::VectorXd v(d);
      for (int i = 0; i < d; ++i) v(i) = uc(rng);
      out.factors = v;
      break;
    }
    case MeasureFamily::RankROrthogonal: {
      out.factored = true;
      out.factors.resize(d, m.rank);
      for (int a = 0; a < m.rank; ++a) {
        Eigen::VectorXd v = detail::gaussian_vector(d, 1.0, rng);
        for (int b = 0; b < a; ++b) {
          const auto prev = out.factors.col(b);
          v -= prev * (prev.dot(v) / prev.squaredNorm());
        }
        double n = v.norm();
        while (n < 1e-12) {
          v = detail::gaussian_vector(d, 1.0, rng);
          for (int b = 0; b < a; ++b) {
            const auto prev = out.factors.col(b);
            v -= prev * (prev.dot(v) / prev.squaredNorm());
          }
          n = v.norm();
        }
        out.factors.col(a) = v * (r / n);
      }
      break;
    }
    case MeasureFamily::RankRIndependent: {
      out.factored = true;
      const auto norms = m.vector_norms();
      out.factors.resize(d, m.rank);
      for (int a = 0; a < m.rank; ++a) {
        out.factors.col(a) = detail::sphere_vector(d, norms[a], rng);
      }
      break;
    }
    case MeasureFamily::FullGauss: {
      out.dense = detail::gauss_symmetric(d, r, rng);
      break;
    }
    case MeasureFamily::FullFixedTrace: {
      Eigen::MatrixXd g = detail::gauss_symmetric(d, r, rng);
      // The Gaussian direction is uniform on the Frobenius sphere of
      // symmetric matrices; rescale so (1/d) tr X^2 = R^2 exactly.
      out.dense = g * (r * std::sqrt(static_cast<double>(d)) / g.norm());
      break;
    }
    case MeasureFamily::FullBoundedTrace: {
      Eigen::MatrixXd g = detail::gauss_symmetric(d, r, rng);
      const double shell = std::pow(u01(rng), 2.0 / (d * (d + 1.0)));
      out.dense = g * (shell * r * std::sqrt(static_cast<double>(d)) / g.norm());
      break;
    }
  }
  return out;
}

inline SymmetricBlock sample_block(const BlockMeasure& m, Rng& rng) {
  return draw_block(m, rng).to_dense();
}

/// Trace of the block product w evaluated on one set of draws (draws[k] is
/// the block with label k+1). Factored draws go through the chain of r x r
/// cross-Gram matrices; dense draws multiply directly.
inline double word_trace(const Word& w, const std::vector<BlockDraw>& draws) {
  if (w.letters.empty()) throw SpecError("word_trace: empty word");
  const auto seq = w.expand();
  const std::size_t p = seq.size();
  if (draws.empty()) throw SpecError("word_trace: no draws");
  for (int label : seq) {
    if (label < 1 || label > static_cast<int>(draws.size())) {
      throw SpecError("word_trace: word references a missing block");
    }
  }

  if (draws.front().factored) {
    // tr prod_j F_j F_j^T = tr prod_j (F_j^T F_{j+1}) cyclically.
    Eigen::MatrixXd chain =
        draws[seq[0] - 1].factors.transpose() * draws[seq[1 % p] - 1].factors;
    for (std::size_t j = 1; j < p; ++j) {
      chain = chain * (draws[seq[j] - 1].factors.transpose() *
                       draws[seq[(j + 1) % p] - 1].factors);
    }
    return chain.trace();
  }

  const int d = static_cast<int>(draws.front().dense.rows());
  Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(d, d);
  for (std::size_t j = 0; j < p; ++j) prod = prod * draws[seq[j] - 1].dense;
  return prod.trace();
}

struct McEstimate {
  double value = 0.0;
  double stderror = 0.0;
  std::uint64_t n_samples = 0;
};

/// Monte-Carlo estimate of <tr(word)> with one independent draw per distinct
/// block per sample.
inline McEstimate word_expectation_mc(const BlockMeasure& m, const Word& w,
                                      std::uint64_t n_samples, Rng& rng) {
  if (w.letters.empty()) throw SpecError("word_expectation_mc: empty word");
  if (n_samples < 2) throw SpecError("word_expectation_mc: need at least 2 samples");
  m.validate();
  const int s = w.distinct_labels();
  RunningStats stats;
  std::vector<BlockDraw> draws(static_cast<std::size_t>(s));
  for (std::uint64_t it = 0; it < n_samples; ++it) {
    for (int k = 0; k < s; ++k) draws[static_cast<std::size_t>(k)] = draw_block(m, rng);
    stats.add(word_trace(w, draws));
  }
  return {stats.mean(), stats.stderror(), n_samples};
}

struct CrossingProbePoint {
  int dim = 0;
  double estimate = 0.0;
  double stderror = 0.0;
};

/// Estimate of <tr X1^2 X2^2 X1^2 X2^2> / R^16 for rank-one sphere blocks
/// across dimensions. The normalized trace (1/d) Z^2 <tr ...> then decays as
/// O(Z^2/d^3); the raw estimate here has log-log slope about -2 in d.
inline std::vector<CrossingProbePoint> crossing_decay_probe(const std::vector<int>& dims,
                                                            std::uint64_t n_samples,
                                                            std::uint64_t seed) {
  Word w = Word::parse("1^2 2^2 1^2 2^2");
  std::vector<CrossingProbePoint> out;
  out.reserve(dims.size());
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const int d = dims[i];
    if (d < 2) throw SpecError("crossing_decay_probe: dims must be >= 2");
    Rng rng = seed_stream(seed, i);
    const auto est =
        word_expectation_mc(BlockMeasure::rank_one(MeasureFamily::RankOneSphere, d), w,
                            n_samples, rng);
    out.push_back({d, est.value, est.stderror});
  }
  return out;
}

}  // namespace sbm
