#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sbm/blocks.hpp"
#include "sbm/errors.hpp"
#include "sbm/graph.hpp"

namespace sbm {

enum class MatrixKind { Adjacency, Laplacian };

inline std::string matrix_kind_name(MatrixKind k) {
  return k == MatrixKind::Adjacency ? "adjacency" : "laplacian";
}

/// Symmetric Nd x Nd block matrix stored by blocks. `off_diagonal` keeps the
/// sampled block X_ij per edge (i<j); the Laplacian applies the -X sign and
/// carries the block-degree sums on the diagonal.
class BlockSparseMatrix {
 public:
  BlockSparseMatrix(int n_vertices, int block_dim, MatrixKind kind)
      : n_(n_vertices), d_(block_dim), kind_(kind) {
    if (kind == MatrixKind::Laplacian) {
      diagonal_.assign(static_cast<std::size_t>(n_), SymmetricBlock::Zero(d_, d_));
    }
  }

  int n_vertices() const { return n_; }
  int block_dim() const { return d_; }
  int dim() const { return n_ * d_; }
  MatrixKind kind() const { return kind_; }

  const std::map<std::pair<int, int>, SymmetricBlock>& off_diagonal() const {
    return blocks_;
  }
  const std::vector<SymmetricBlock>& diagonal() const { return diagonal_; }

  void set_edge_block(int i, int j, SymmetricBlock x) {
    const auto key = std::minmax(i, j);
    if (kind_ == MatrixKind::Laplacian) {
      diagonal_[static_cast<std::size_t>(i)] += x;
      diagonal_[static_cast<std::size_t>(j)] += x;
    }
    blocks_[key] = std::move(x);
  }

  /// Matrix block at (i, j) as it appears in the assembled matrix.
  SymmetricBlock block(int i, int j) const {
    if (i == j) {
      if (kind_ == MatrixKind::Laplacian) return diagonal_[static_cast<std::size_t>(i)];
      return SymmetricBlock::Zero(d_, d_);
    }
    const auto it = blocks_.find(std::minmax(i, j));
    if (it == blocks_.end()) return SymmetricBlock::Zero(d_, d_);
    return kind_ == MatrixKind::Laplacian ? SymmetricBlock(-it->second) : it->second;
  }

  /// y = A x through the block structure. The Laplacian uses the difference
  /// form sum_j X_ij (x_i - x_j), which annihilates constant-per-vertex
  /// vectors exactly.
  Eigen::VectorXd matvec(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) throw SpecError("matvec: dimension mismatch");
    Eigen::VectorXd y = Eigen::VectorXd::Zero(dim());
    for (const auto& [key, block] : blocks_) {
      const auto [i, j] = key;
      const auto xi = x.segment(i * d_, d_);
      const auto xj = x.segment(j * d_, d_);
      if (kind_ == MatrixKind::Adjacency) {
        y.segment(i * d_, d_) += block * xj;
        y.segment(j * d_, d_) += block * xi;
      } else {
        y.segment(i * d_, d_) += block * (xi - xj);
        y.segment(j * d_, d_) += block * (xj - xi);
      }
    }
    return y;
  }

  /// Dense copy for the eigensolver; guarded by a desk-scale limit.
  Eigen::MatrixXd densify(int max_dim = 5000) const {
    if (dim() > max_dim) {
      throw ResourceError("densify: N*d = " + std::to_string(dim()) +
                          " exceeds the dense limit " + std::to_string(max_dim));
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim(), dim());
    for (const auto& [key, block] : blocks_) {
      const auto [i, j] = key;
      if (kind_ == MatrixKind::Adjacency) {
        a.block(i * d_, j * d_, d_, d_) = block;
        a.block(j * d_, i * d_, d_, d_) = block;
      } else {
        a.block(i * d_, j * d_, d_, d_) = -block;
        a.block(j * d_, i * d_, d_, d_) = -block;
      }
    }
    if (kind_ == MatrixKind::Laplacian) {
      for (int i = 0; i < n_; ++i) {
        a.block(i * d_, i * d_, d_, d_) = diagonal_[static_cast<std::size_t>(i)];
      }
    }
    return a;
  }

  /// (1/(Nd)) tr A^2 computed blockwise.
  double normalized_trace_square() const {
    double acc = 0.0;
    for (const auto& [key, block] : blocks_) acc += 2.0 * block.squaredNorm();
    if (kind_ == MatrixKind::Laplacian) {
      for (const auto& blk : diagonal_) acc += blk.squaredNorm();
    }
    return acc / dim();
  }

 private:
  int n_;
  int d_;
  MatrixKind kind_;
  std::map<std::pair<int, int>, SymmetricBlock> blocks_;
  std::vector<SymmetricBlock> diagonal_;
};

/// One i.i.d. block per edge, reused on both symmetric positions.
inline BlockSparseMatrix assemble_adjacency(const EdgeSet& e, const BlockMeasure& m,
                                            Rng& rng) {
  m.validate();
  BlockSparseMatrix a(e.n_vertices, m.dim, MatrixKind::Adjacency);
  for (const auto& [i, j] : e.edges) a.set_edge_block(i, j, sample_block(m, rng));
  return a;
}

/// L = D - A at block level; D holds the block-degree sums.
inline BlockSparseMatrix assemble_laplacian(const EdgeSet& e, const BlockMeasure& m,
                                            Rng& rng) {
  m.validate();
  BlockSparseMatrix l(e.n_vertices, m.dim, MatrixKind::Laplacian);
  for (const auto& [i, j] : e.edges) l.set_edge_block(i, j, sample_block(m, rng));
  return l;
}

namespace detail {

inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Text snapshot: header "N d kind", then one line per stored matrix block
/// ("i j" followed by the d*d row-major entries). Off-diagonal lines carry
/// the matrix block itself (-X for a Laplacian); diagonal lines appear only
/// for Laplacians.
inline void save_block_matrix(const BlockSparseMatrix& a, std::ostream& os) {
  os << a.n_vertices() << ' ' << a.block_dim() << ' ' << matrix_kind_name(a.kind())
     << '\n';
  const int d = a.block_dim();
  auto write_block = [&](int i, int j, const SymmetricBlock& b) {
    os << i << ' ' << j;
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) os << ' ' << detail::format_g17(b(r, c));
    }
    os << '\n';
  };
  for (const auto& [key, block] : a.off_diagonal()) {
    write_block(key.first, key.second,
                a.kind() == MatrixKind::Laplacian ? SymmetricBlock(-block) : block);
  }
  if (a.kind() == MatrixKind::Laplacian) {
    for (int i = 0; i < a.n_vertices(); ++i) write_block(i, i, a.diagonal()[i]);
  }
}

inline void save_block_matrix(const BlockSparseMatrix& a, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ResourceError("save_block_matrix: cannot open " + path);
  save_block_matrix(a, os);
}

inline BlockSparseMatrix load_block_matrix(std::istream& is) {
  int n = 0, d = 0;
  std::string kind_name;
  if (!(is >> n >> d >> kind_name)) throw SpecError("load_block_matrix: bad header");
  MatrixKind kind;
  if (kind_name == "adjacency") {
    kind = MatrixKind::Adjacency;
  } else if (kind_name == "laplacian") {
    kind = MatrixKind::Laplacian;
  } else {
    throw SpecError("load_block_matrix: unknown kind '" + kind_name + "'");
  }
  BlockSparseMatrix a(n, d, kind);
  int i = 0, j = 0;
  while (is >> i >> j) {
    SymmetricBlock b(d, d);
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) {
        if (!(is >> b(r, c))) throw SpecError("load_block_matrix: truncated block");
      }
    }
    if (i == j) continue;  // diagonal lines are redundant given the edge blocks
    a.set_edge_block(i, j, kind == MatrixKind::Laplacian ? SymmetricBlock(-b) : b);
  }
  return a;
}

inline BlockSparseMatrix load_block_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ResourceError("load_block_matrix: cannot open " + path);
  return load_block_matrix(is);
}

}  // namespace sbm
