#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <sstream>

#include "sbm/assembly.hpp"
#include "sbm/spectral.hpp"

using namespace sbm;
using Catch::Approx;

TEST_CASE("empty edge set assembles the zero matrix", "[assembly]") {
  Rng rng = seed_stream(201, 0);
  const EdgeSet empty{4, {}};
  const auto m = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 2);
  const auto a = assemble_adjacency(empty, m, rng);
  REQUIRE(a.densify().norm() == 0.0);
  const auto l = assemble_laplacian(empty, m, rng);
  REQUIRE(l.densify().norm() == 0.0);
  const auto s = eigenvalues(a);
  REQUIRE(s.eigenvalues == std::vector<double>{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
}

TEST_CASE("single-edge adjacency has the block-swap spectrum", "[assembly]") {
  Rng rng = seed_stream(201, 1);
  const EdgeSet e{2, {{0, 1}}};
  const auto m = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 3);
  const auto a = assemble_adjacency(e, m, rng);
  const auto s = eigenvalues(a);
  REQUIRE(s.eigenvalues.size() == 6);
  REQUIRE(s.eigenvalues.front() == Approx(-1.0).margin(1e-8));
  REQUIRE(s.eigenvalues.back() == Approx(1.0).margin(1e-8));
  for (int i = 1; i < 5; ++i) REQUIRE(std::abs(s.eigenvalues[i]) < 1e-8);
}

TEST_CASE("scalar path graph spectrum", "[assembly]") {
  Rng rng = seed_stream(201, 2);
  const EdgeSet path{3, {{0, 1}, {1, 2}}};
  const auto scalar = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 1);
  const auto a = assemble_adjacency(path, scalar, rng);
  const auto s = eigenvalues(a);
  REQUIRE(s.eigenvalues[0] == Approx(-std::sqrt(2.0)).margin(1e-8));
  REQUIRE(s.eigenvalues[1] == Approx(0.0).margin(1e-8));
  REQUIRE(s.eigenvalues[2] == Approx(std::sqrt(2.0)).margin(1e-8));
}

TEST_CASE("scalar complete graph spectrum", "[assembly]") {
  Rng rng = seed_stream(201, 3);
  const EdgeSet k3{3, {{0, 1}, {0, 2}, {1, 2}}};
  const auto scalar = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 1);
  const auto s = eigenvalues(assemble_adjacency(k3, scalar, rng));
  REQUIRE(s.eigenvalues[0] == Approx(-1.0).margin(1e-8));
  REQUIRE(s.eigenvalues[1] == Approx(-1.0).margin(1e-8));
  REQUIRE(s.eigenvalues[2] == Approx(2.0).margin(1e-8));
}

TEST_CASE("single-edge Laplacian spectrum is {0^d} and {2 lambda_i(X)}", "[assembly]") {
  Rng rng = seed_stream(201, 4);
  const EdgeSet e{2, {{0, 1}}};
  const auto m = BlockMeasure::full(MeasureFamily::FullGauss, 3);
  const auto l = assemble_laplacian(e, m, rng);
  const SymmetricBlock x = l.diagonal()[0];  // the single edge block
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x);
  std::vector<double> expected = {0.0, 0.0, 0.0};
  for (int i = 0; i < 3; ++i) expected.push_back(2.0 * es.eigenvalues()(i));
  std::sort(expected.begin(), expected.end());
  const auto s = eigenvalues(l);
  for (int i = 0; i < 6; ++i) {
    REQUIRE(s.eigenvalues[static_cast<std::size_t>(i)] ==
            Approx(expected[static_cast<std::size_t>(i)]).margin(1e-8));
  }
}

TEST_CASE("Laplacian with rank-one blocks is positive semidefinite", "[assembly]") {
  Rng grng = seed_stream(201, 5);
  const GraphSpec gs{30, 4.0, GraphFamily::ErdosRenyi};
  const EdgeSet e = sample_er_edges(gs, grng);
  const auto m = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 3);
  const auto s = eigenvalues(assemble_laplacian(e, m, grng));
  REQUIRE(s.eigenvalues.front() >= -1e-8);
}

TEST_CASE("densified matrix is exactly symmetric", "[assembly]") {
  Rng rng = seed_stream(201, 6);
  const GraphSpec gs{12, 3.0, GraphFamily::ErdosRenyi};
  const EdgeSet e = sample_er_edges(gs, rng);
  for (auto kind : {MatrixKind::Adjacency, MatrixKind::Laplacian}) {
    const auto m = BlockMeasure::full(MeasureFamily::FullGauss, 3);
    const auto a = kind == MatrixKind::Adjacency ? assemble_adjacency(e, m, rng)
                                                 : assemble_laplacian(e, m, rng);
    const Eigen::MatrixXd dense = a.densify();
    REQUIRE((dense - dense.transpose()).norm() == 0.0);
  }
}

TEST_CASE("Laplacian block rows sum to zero exactly", "[assembly]") {
  Rng rng = seed_stream(201, 7);
  const GraphSpec gs{15, 4.0, GraphFamily::ErdosRenyi};
  const EdgeSet e = sample_er_edges(gs, rng);
  const auto m = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 2);
  const auto l = assemble_laplacian(e, m, rng);
  for (int i = 0; i < l.n_vertices(); ++i) {
    SymmetricBlock row_sum = SymmetricBlock::Zero(2, 2);
    // diagonal + sum of off-diagonal matrix blocks in the same sorted order
    // the diagonal was accumulated in
    for (int j = 0; j < l.n_vertices(); ++j) {
      if (j != i) row_sum += l.block(i, j);
    }
    const SymmetricBlock diff = l.block(i, i) + row_sum;
    REQUIRE(diff.norm() == 0.0);
  }
}

TEST_CASE("constant-per-vertex vectors are exact Laplacian null vectors", "[assembly]") {
  Rng rng = seed_stream(201, 8);
  const GraphSpec gs{20, 3.0, GraphFamily::ErdosRenyi};
  const EdgeSet e = sample_er_edges(gs, rng);
  const int d = 3;
  const auto m = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, d);
  const auto l = assemble_laplacian(e, m, rng);
  for (int basis = 0; basis < d; ++basis) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(l.dim());
    for (int i = 0; i < l.n_vertices(); ++i) w(i * d + basis) = 1.0;
    REQUIRE(l.matvec(w).norm() == 0.0);
  }
}

TEST_CASE("matvec agrees with the dense oracle", "[assembly]") {
  Rng rng = seed_stream(201, 9);
  const GraphSpec gs{8, 4.0, GraphFamily::ErdosRenyi};
  const EdgeSet e = sample_er_edges(gs, rng);
  const auto m = BlockMeasure::full(MeasureFamily::FullGauss, 3);
  for (auto kind : {MatrixKind::Adjacency, MatrixKind::Laplacian}) {
    const auto a = kind == MatrixKind::Adjacency ? assemble_adjacency(e, m, rng)
                                                 : assemble_laplacian(e, m, rng);
    const Eigen::MatrixXd dense = a.densify();
    for (int it = 0; it < 5; ++it) {
      Eigen::VectorXd x(a.dim());
      std::normal_distribution<double> nd;
      for (int i = 0; i < x.size(); ++i) x(i) = nd(rng);
      const Eigen::VectorXd fast = a.matvec(x);
      const Eigen::VectorXd slow = dense * x;
      REQUIRE((fast - slow).norm() <= 1e-10 * std::max(1.0, slow.norm()));
    }
  }
}

TEST_CASE("matvec structure on a single edge", "[assembly]") {
  Rng rng = seed_stream(201, 10);
  const EdgeSet e{2, {{0, 1}}};
  const auto m = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 3);
  const auto a = assemble_adjacency(e, m, rng);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(6);
  x(0) = 1.0;
  x(1) = -2.0;
  x(2) = 0.5;
  const Eigen::VectorXd y = a.matvec(x);
  const Eigen::VectorXd expect = a.block(0, 1) * x.head(3);
  REQUIRE(y.head(3).norm() == 0.0);
  REQUIRE((y.tail(3) - expect).norm() < 1e-15);
}

TEST_CASE("matvec dimension mismatch", "[assembly]") {
  Rng rng = seed_stream(201, 11);
  const EdgeSet e{2, {{0, 1}}};
  const auto m = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 2);
  const auto a = assemble_adjacency(e, m, rng);
  REQUIRE_THROWS_AS(a.matvec(Eigen::VectorXd::Zero(5)), SpecError);
}

TEST_CASE("blockwise trace matches the eigenvalue sum of squares", "[assembly]") {
  Rng rng = seed_stream(201, 12);
  const GraphSpec gs{30, 5.0, GraphFamily::ErdosRenyi};
  const EdgeSet e = sample_er_edges(gs, rng);
  const auto m = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 3);
  const auto a = assemble_adjacency(e, m, rng);
  const auto s = eigenvalues(a);
  double mu2 = 0.0;
  for (double lam : s.eigenvalues) mu2 += lam * lam;
  mu2 /= static_cast<double>(s.eigenvalues.size());
  REQUIRE(a.normalized_trace_square() == Approx(mu2).epsilon(1e-8));
}

TEST_CASE("densify respects the resource limit", "[assembly]") {
  Rng rng = seed_stream(201, 13);
  const EdgeSet e{10, {{0, 1}}};
  const auto m = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 4);
  const auto a = assemble_adjacency(e, m, rng);
  REQUIRE_THROWS_AS(a.densify(39), ResourceError);
  REQUIRE_NOTHROW(a.densify(40));
}

TEST_CASE("text snapshot round trip", "[assembly]") {
  Rng rng = seed_stream(201, 14);
  const GraphSpec gs{10, 3.0, GraphFamily::ErdosRenyi};
  const EdgeSet e = sample_er_edges(gs, rng);
  for (auto kind : {MatrixKind::Adjacency, MatrixKind::Laplacian}) {
    const auto m = BlockMeasure::full(MeasureFamily::FullGauss, 2);
    const auto a = kind == MatrixKind::Adjacency ? assemble_adjacency(e, m, rng)
                                                 : assemble_laplacian(e, m, rng);
    std::stringstream ss;
    save_block_matrix(a, ss);
    // header sanity
    std::string n_str, d_str, kind_str;
    std::stringstream header(ss.str().substr(0, ss.str().find('\n')));
    header >> n_str >> d_str >> kind_str;
    REQUIRE(n_str == "10");
    REQUIRE(d_str == "2");
    REQUIRE(kind_str == matrix_kind_name(kind));

    const auto b = load_block_matrix(ss);
    REQUIRE(b.kind() == a.kind());
    REQUIRE(b.n_vertices() == a.n_vertices());
    REQUIRE(b.block_dim() == a.block_dim());
    REQUIRE((a.densify() - b.densify()).norm() == 0.0);  // %.17g is lossless
  }
}
