#include "oracles.hpp"
#include "scgt/fc_graph.hpp"
#include "scgt/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace scgt;

namespace {

FCMatrix fc3(double a, double b, double c) {
  Mat m(3, 3);
  m << 1, a, b, a, 1, c, b, c, 1;
  return {m};
}

}  // namespace

TEST(Adjacency, TwoNodesThresholdZero) {
  Mat m(2, 2);
  m << 1, .5, .5, 1;
  Mat want(2, 2);
  want << 0, .5, .5, 0;
  EXPECT_EQ(build_adjacency({m}, 0.0), want);
}

TEST(Adjacency, ThresholdKeepsStrongAndAnticorrelatedEdges) {
  const Mat a = build_adjacency(fc3(.9, .2, -.6), .5);
  EXPECT_EQ(a(0, 1), .9);
  EXPECT_EQ(a(1, 0), .9);
  EXPECT_EQ(a(0, 2), 0.0);
  EXPECT_EQ(a(2, 0), 0.0);
  EXPECT_EQ(a(1, 2), -.6);
  EXPECT_EQ(a(2, 1), -.6);
}

TEST(Adjacency, IdentityGivesNoEdges) {
  for (double t : {0.0, 0.3, 0.99}) EXPECT_TRUE(build_adjacency({Mat::Identity(5, 5)}, t).isZero(0.0));
}

TEST(Adjacency, RejectsInvalidInput) {
  Mat asym = Mat::Identity(3, 3);
  asym(0, 1) = .3;
  EXPECT_THROW(build_adjacency({asym}, 0.0), ValidationError);
  Mat range = Mat::Identity(2, 2);
  range(0, 1) = range(1, 0) = 1.5;
  EXPECT_THROW(build_adjacency({range}, 0.0), ValidationError);
  Mat diag = Mat::Identity(2, 2);
  diag(0, 0) = 0.5;
  EXPECT_THROW(build_adjacency({diag}, 0.0), ValidationError);
  EXPECT_THROW(build_adjacency({Mat::Identity(2, 2)}, 1.0), ValidationError);
  EXPECT_THROW(build_adjacency({Mat::Identity(2, 2)}, -0.1), ValidationError);
}

TEST(Adjacency, ErrorNamesTheOffendingEntry) {
  Mat asym = Mat::Identity(3, 3);
  asym(1, 2) = .4;
  try {
    build_adjacency({asym}, 0.0);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("(1,2)"), std::string::npos) << e.what();
  }
}

TEST(Adjacency, SymmetricZeroDiagonalAndPermutationConsistent) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 0.9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 2 + static_cast<Eigen::Index>(rng() % 12);
    const FCMatrix fc = oracle::random_fc(n, rng);
    const double t = u(rng);
    const Mat a = build_adjacency(fc, t);
    EXPECT_EQ(a, a.transpose());
    EXPECT_TRUE(a.diagonal().isZero(0.0));
    const auto perm = oracle::random_permutation(n, rng);
    EXPECT_EQ(build_adjacency({oracle::permute_both(fc.values, perm)}, t), oracle::permute_both(a, perm));
  }
}

TEST(Laplacian, SingleEdge) {
  Mat a(2, 2);
  a << 0, 1, 1, 0;
  Mat want(2, 2);
  want << 1, -1, -1, 1;
  EXPECT_TRUE(normalized_laplacian(a).isApprox(want, 1e-15));
}

TEST(Laplacian, NoEdgesIsIdentity) { EXPECT_EQ(normalized_laplacian(Mat::Zero(4, 4)), Mat::Identity(4, 4)); }

TEST(Laplacian, IsolatedNodeConvention) {
  Mat a = Mat::Zero(3, 3);
  a(0, 1) = a(1, 0) = .7;
  const Mat l = normalized_laplacian(a);
  EXPECT_EQ(l(2, 2), 1.0);
  EXPECT_EQ(l.row(2).sum(), 1.0);
  EXPECT_EQ(l.col(2).sum(), 1.0);
}

TEST(Laplacian, HandComputedWeightedTriangle) {
  Mat a(3, 3);
  a << 0, 1, 2, 1, 0, -3, 2, -3, 0;
  // degrees use |w|: 3, 4, 5
  const Mat l = normalized_laplacian(a);
  EXPECT_NEAR(l(0, 1), -1.0 / std::sqrt(12.0), 1e-15);
  EXPECT_NEAR(l(0, 2), -2.0 / std::sqrt(15.0), 1e-15);
  EXPECT_NEAR(l(1, 2), 3.0 / std::sqrt(20.0), 1e-15);
  EXPECT_EQ(l, l.transpose());
}

TEST(Laplacian, SpectrumBoundsAndPsdAgainstJacobi) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Mat a = oracle::random_nonneg_adjacency(10, 0.4, rng);
    const Mat l = normalized_laplacian(a);
    EXPECT_EQ(l, l.transpose());
    const auto ref = oracle::jacobi(l);
    const Spectrum s = symmetric_spectrum(l);
    for (Eigen::Index k = 0; k < 10; ++k) {
      EXPECT_GE(ref.values(k), -1e-10);
      EXPECT_LE(ref.values(k), 2.0 + 1e-10);
      EXPECT_NEAR(s.eigenvalues(k), ref.values(k), 1e-10);
    }
    for (int r = 0; r < 100; ++r) {
      Vec x(10);
      for (auto& v : x) v = g(rng);
      x.normalize();
      EXPECT_GE(x.dot(l * x), -1e-10);
    }
  }
}

TEST(Laplacian, ConnectedGraphTrivialEigenvector) {
  std::mt19937_64 rng(8);
  int checked = 0;
  while (checked < 20) {
    const Mat a = oracle::random_nonneg_adjacency(9, 0.5, rng);
    if (!oracle::connected(a)) continue;
    ++checked;
    const Spectrum s = symmetric_spectrum(normalized_laplacian(a));
    EXPECT_NEAR(s.eigenvalues(0), 0.0, 1e-8);
    Vec d_half = a.cwiseAbs().rowwise().sum().cwiseSqrt();
    d_half.normalize();
    EXPECT_NEAR(std::abs(s.eigenvectors.col(0).dot(d_half)), 1.0, 1e-8);
  }
}

TEST(PositionalEncodings, SingleEdgeHandSolved) {
  Mat a(2, 2);
  a << 0, 1, 1, 0;
  const Mat l = normalized_laplacian(a);
  const Spectrum s = symmetric_spectrum(l);
  EXPECT_NEAR(s.eigenvalues(0), 0.0, 1e-14);
  EXPECT_NEAR(s.eigenvalues(1), 2.0, 1e-14);
  const Mat pe = laplacian_positional_encodings(l, 2);
  const double h = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(pe(0, 0), h, 1e-14);
  EXPECT_NEAR(pe(1, 0), h, 1e-14);
  // (1,-1)/sqrt2 has tied magnitudes; the first entry wins and is made positive.
  EXPECT_NEAR(pe(0, 1), h, 1e-14);
  EXPECT_NEAR(pe(1, 1), -h, 1e-14);
}

TEST(PositionalEncodings, DegenerateIdentitySpectrum) {
  const Mat pe = laplacian_positional_encodings(Mat::Identity(5, 5), 5);
  EXPECT_TRUE((pe.transpose() * pe).isApprox(Mat::Identity(5, 5), 1e-8));
  for (Eigen::Index c = 0; c < 5; ++c) {
    Eigen::Index arg = 0;
    pe.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(pe(arg, c), 0.0);
  }
}

TEST(PositionalEncodings, TrivialVectorDroppedOnlyBelowN) {
  std::mt19937_64 rng(3);
  Mat a;
  do a = oracle::random_nonneg_adjacency(8, 0.6, rng);
  while (!oracle::connected(a));
  const Mat l = normalized_laplacian(a);
  const Spectrum s = symmetric_spectrum(l);
  const Mat full = laplacian_positional_encodings(l, 8);
  const Mat part = laplacian_positional_encodings(l, 3);
  EXPECT_EQ(full, s.eigenvectors);
  EXPECT_EQ(part, s.eigenvectors.middleCols(1, 3));
  EXPECT_THROW(laplacian_positional_encodings(l, 9), ValidationError);
  EXPECT_THROW(laplacian_positional_encodings(l, 0), ValidationError);
}

TEST(PositionalEncodings, OrthonormalSortedMatchesOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = 3 + static_cast<Eigen::Index>(rng() % 10);
    const Mat l = normalized_laplacian(oracle::random_nonneg_adjacency(n, 0.5, rng));
    const Mat pe = laplacian_positional_encodings(l, n);
    EXPECT_TRUE((pe.transpose() * pe).isApprox(Mat::Identity(n, n), 1e-8));
    for (Eigen::Index c = 0; c < n; ++c) EXPECT_NEAR(pe.col(c).norm(), 1.0, 1e-10);
    const auto ref = oracle::jacobi(l);
    for (Eigen::Index c = 0; c < n; ++c) {
      const Vec lv = l * pe.col(c);
      EXPECT_NEAR((lv - ref.values(c) * pe.col(c)).norm(), 0.0, 1e-9);
    }
  }
}

TEST(FcToGraph, HundredNodeShapes) {
  std::mt19937_64 rng(1);
  const BrainGraph g = fc_to_graph(oracle::random_fc(100, rng), 0.0, 100);
  EXPECT_EQ(g.node_features.rows(), 100);
  EXPECT_EQ(g.node_features.cols(), 100);
  EXPECT_EQ(g.pos_enc.rows(), 100);
  EXPECT_EQ(g.pos_enc.cols(), 100);
}

TEST(FcToGraph, InvariantsAndDeterminism) {
  Mat m(4, 4);
  m << 1, .8, -.4, .1,  //
      .8, 1, .3, -.7,   //
      -.4, .3, 1, .5,   //
      .1, -.7, .5, 1;
  const FCMatrix fc{m};
  const BrainGraph g = fc_to_graph(fc, 0.2, 3);
  EXPECT_TRUE(g.adjacency.diagonal().isZero(0.0));
  EXPECT_EQ(g.adjacency(0, 3), 0.0);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) EXPECT_EQ(g.node_features(i, j), i == j ? 0.0 : m(i, j));
  EXPECT_TRUE((g.pos_enc.transpose() * g.pos_enc).isApprox(Mat::Identity(3, 3), 1e-10));
  const BrainGraph h = fc_to_graph(fc, 0.2, 3);
  EXPECT_EQ(g.adjacency, h.adjacency);
  EXPECT_EQ(g.node_features, h.node_features);
  EXPECT_EQ(g.pos_enc, h.pos_enc);
}

TEST(Pearson, SymmetricUnitDiagonalAndRejectsConstant) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Mat x(50, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  const Mat c = pearson_correlation(x);
  EXPECT_EQ(c, c.transpose());
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_EQ(c(i, i), 1.0);
  // hand value for columns 0 and 1
  const Vec a = x.col(0).array() - x.col(0).mean(), b = x.col(1).array() - x.col(1).mean();
  EXPECT_NEAR(c(0, 1), a.dot(b) / (a.norm() * b.norm()), 1e-14);
  x.col(3).setConstant(2.0);
  EXPECT_THROW(pearson_correlation(x), NumericError);
}

TEST(GraphSnapshot, WritesThreeFiles) {
  std::mt19937_64 rng(4);
  const BrainGraph g = fc_to_graph(oracle::random_fc(5, rng), 0.0, 5);
  const auto dir = std::filesystem::temp_directory_path() / "scgt_snapshot_test";
  std::filesystem::remove_all(dir);
  write_graph_snapshot(dir, "s1", g);
  EXPECT_EQ(read_matrix_csv(dir / "s1.adj.csv"), g.adjacency);
  EXPECT_EQ(read_matrix_csv(dir / "s1.feat.csv"), g.node_features);
  EXPECT_EQ(read_matrix_csv(dir / "s1.pe.csv"), g.pos_enc);
  std::filesystem::remove_all(dir);
}
