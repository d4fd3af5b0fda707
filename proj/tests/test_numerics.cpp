#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "cemb/numerics.hpp"
#include "cemb/text_io.hpp"

using namespace cemb;

TEST(Matrix, MatmulMatchesHandComputation) {
  const auto a = Matrix::from_rows({{1, 2}, {3, 4}});
  const auto b = Matrix::from_rows({{5, 6}, {7, 8}});
  EXPECT_EQ(matmul(a, b), Matrix::from_rows({{19, 22}, {43, 50}}));
  EXPECT_THROW(matmul(a, Matrix(3, 1)), std::invalid_argument);
}

TEST(Matrix, RaggedRowsRejected) { EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), std::invalid_argument); }

TEST(Matrix, TransposeTwiceIsIdentity) {
  Rng rng(3);
  Matrix m(4, 7);
  for (double& v : m.data()) v = rng.normal();
  EXPECT_EQ(m.transposed().transposed(), m);
  EXPECT_EQ(m.transposed()(5, 2), m(2, 5));
}

TEST(Dot, AgreesWithNaiveSumForAllLengths) {
  Rng rng(5);
  for (std::size_t n = 0; n < 23; ++n) {
    Vector a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = rng.normal(), b[i] = rng.normal();
    double naive = 0.0;
    for (std::size_t i = 0; i < n; ++i) naive += a[i] * b[i];
    EXPECT_NEAR(dot(a, b), naive, 1e-12);
  }
}

TEST(SparseVector, MergesDuplicatesAndDropsZeros) {
  const auto v = SparseVector::from_entries({{3, 1.0}, {1, 2.0}, {3, 2.0}, {5, 0.0}, {7, 1.0}, {7, -1.0}});
  ASSERT_EQ(v.nnz(), 2u);
  EXPECT_EQ(v.get(1), 2.0);
  EXPECT_EQ(v.get(3), 3.0);
  EXPECT_EQ(v.get(5), 0.0);
  EXPECT_EQ(v.max_index_bound(), 4u);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, SubstreamsAreIndependentOfCallOrder) {
  const Rng root(9);
  Rng x1 = root.substream("embed.init");
  Rng other = root.substream("fnet.warp");
  other.next_u64();
  Rng x2 = root.substream("embed.init");
  for (int i = 0; i < 10; ++i) EXPECT_EQ(x1.next_u64(), x2.next_u64());
  EXPECT_NE(root.substream("a").next_u64(), root.substream("b").next_u64());
}

TEST(Rng, UniformIntStaysInRangeAndCoversIt) {
  Rng rng(1);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) ++seen.at(rng.uniform_int(7));
  for (int s : seen) EXPECT_GT(s, 850);
  EXPECT_THROW(rng.uniform_int(0), std::invalid_argument);
}

TEST(Rng, NormalMomentsAreStandard) {
  Rng rng(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(2);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

namespace {

// Empirical frequencies of a sampler against its weights (chi-square style).
double max_frequency_error(const std::vector<double>& w, std::size_t draws, std::uint64_t seed) {
  DiscreteSampler s(w);
  Rng rng(seed);
  std::vector<double> counts(w.size(), 0.0);
  for (std::size_t i = 0; i < draws; ++i) counts[s.sample(rng)] += 1.0;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    worst = std::max(worst, std::abs(counts[i] / static_cast<double>(draws) - w[i] / total));
  return worst;
}

}  // namespace

TEST(DiscreteSampler, CumulativeBranchMatchesWeights) {
  EXPECT_LT(max_frequency_error({1, 2, 3, 4, 0, 10}, 200000, 1), 0.005);
}

TEST(DiscreteSampler, AliasBranchMatchesWeights) {
  std::vector<double> w(3000);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (i % 3 == 0) ? 0.0 : 1.0 + static_cast<double>(i % 17);
  DiscreteSampler s(w);
  EXPECT_TRUE(s.uses_alias());
  EXPECT_LT(max_frequency_error(w, 400000, 2), 0.002);
}

TEST(DiscreteSampler, ZeroWeightsNeverDrawn) {
  for (const auto& w : {std::vector<double>{0, 1, 0}, std::vector<double>(2000, 0.0)}) {
    auto ww = w;
    ww[1] = 1.0;
    DiscreteSampler s(ww);
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(s.sample(rng), 1u);
  }
}

TEST(DiscreteSampler, RejectsBadWeights) {
  EXPECT_THROW(DiscreteSampler(std::vector<double>{0, 0}), std::invalid_argument);
  EXPECT_THROW(DiscreteSampler(std::vector<double>{1, -1}), std::invalid_argument);
  EXPECT_THROW(DiscreteSampler(std::vector<double>{1, NAN}), std::invalid_argument);
}

TEST(Nonlinearities, SigmoidAndSoftplusAreStableAtExtremes) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(sigmoid(-800.0), 0.0);
  EXPECT_EQ(sigmoid(800.0), 1.0);
  EXPECT_NEAR(softplus(800.0), 800.0, 1e-12);
  EXPECT_NEAR(softplus(-800.0), 0.0, 1e-300);
  EXPECT_NEAR(log_sigmoid(-800.0), -800.0, 1e-9);
  for (double x : {-3.0, -0.5, 0.0, 2.0}) EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-15);
}

TEST(Nonlinearities, SoftmaxSumsToOneAndIsShiftInvariant) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    Vector v(1 + rng.uniform_int(9));
    for (double& x : v) x = 50.0 * rng.normal();
    const auto p = softmax(v);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    Vector shifted = v;
    for (double& x : shifted) x += 123.0;
    const auto q = softmax(shifted);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
  EXPECT_THROW(softmax(Vector{}), std::invalid_argument);
}

TEST(Nonlinearities, LogSumExpMatchesDirectFormula) {
  const Vector v = {0.1, -2.0, 3.0};
  double direct = 0.0;
  for (double x : v) direct += std::exp(x);
  EXPECT_NEAR(log_sum_exp(v), std::log(direct), 1e-12);
  EXPECT_NEAR(log_sum_exp(Vector{1000.0, 1000.0}), 1000.0 + std::log(2.0), 1e-9);
}

TEST(KMeans, SeparatedBlobsRecovered) {
  Rng rng(3);
  Matrix pts(90, 2);
  for (std::size_t i = 0; i < 90; ++i) {
    const double cx = 10.0 * static_cast<double>(i / 30);
    pts(i, 0) = cx + 0.1 * rng.normal();
    pts(i, 1) = -cx + 0.1 * rng.normal();
  }
  Rng krng(1);
  const auto r = kmeans(pts, 3, 50, krng);
  for (std::size_t blob = 0; blob < 3; ++blob)
    for (std::size_t i = blob * 30; i < blob * 30 + 30; ++i) EXPECT_EQ(r.assignments[i], r.assignments[blob * 30]);
  EXPECT_NE(r.assignments[0], r.assignments[30]);
  EXPECT_NE(r.assignments[30], r.assignments[60]);
}

TEST(KMeans, ObjectiveNeverIncreases) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Matrix pts(60, 3);
    for (double& v : pts.data()) v = rng.normal();
    const auto r = kmeans(pts, 5, 100, rng);
    for (std::size_t i = 1; i < r.objective_history.size(); ++i)
      EXPECT_LE(r.objective_history[i], r.objective_history[i - 1] + 1e-12);
  }
}

TEST(KMeans, KEqualsNGivesZeroObjectiveAndKOneTheMean) {
  Rng rng(5);
  Matrix pts(6, 2);
  for (double& v : pts.data()) v = rng.normal();
  EXPECT_NEAR(kmeans(pts, 6, 10, rng).objective(), 0.0, 1e-24);
  const auto one = kmeans(pts, 1, 10, rng);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 6; ++i) mean += pts(i, c) / 6.0;
    EXPECT_NEAR(one.centroids(0, c), mean, 1e-12);
  }
}

TEST(KMeans, InvalidArgumentsRejected) {
  Matrix pts(3, 2);
  Rng rng(1);
  EXPECT_THROW(kmeans(pts, 0, 10, rng), std::invalid_argument);
  EXPECT_THROW(kmeans(pts, 4, 10, rng), std::invalid_argument);
  EXPECT_THROW(kmeans(pts, 2, 0, rng), std::invalid_argument);
}

TEST(KMeans, DuplicatePointsDoNotBreakSeeding) {
  Matrix pts(5, 2, 1.0);
  Rng rng(1);
  const auto r = kmeans(pts, 3, 5, rng);
  EXPECT_EQ(r.objective(), 0.0);
}

TEST(Optimizers, AdaGradFirstStepIsSignTimesLr) {
  AdaGrad opt(2, 0.1);
  Vector p = {1.0, 1.0};
  opt.step(p, Vector{4.0, -0.5});
  EXPECT_NEAR(p[0], 0.9, 1e-8);
  EXPECT_NEAR(p[1], 1.1, 1e-8);
  double x = 0.0;
  AdaGrad one(3, 0.5);
  one.step_one(x, 2, 2.0);
  EXPECT_NEAR(x, -0.5, 1e-8);
}

TEST(Optimizers, AdamMinimizesAQuadratic) {
  Adam opt(1, 0.05);
  Vector x = {3.0};
  for (int i = 0; i < 2000; ++i) {
    Vector g = {2.0 * (x[0] - 1.0)};
    opt.step(x, g);
  }
  EXPECT_NEAR(x[0], 1.0, 1e-3);
}

TEST(Optimizers, AdamZeroLrLeavesParameters) {
  Adam opt(2, 0.0);
  Vector x = {1.0, -2.0};
  Vector g = {5.0, 5.0};
  opt.step(x, g);
  EXPECT_EQ(x, (Vector{1.0, -2.0}));
  EXPECT_EQ(g, (Vector{0.0, 0.0}));
}

TEST(GradCheck, ExactOnAQuadraticAndCatchesAWrongGradient) {
  Matrix w = Matrix::from_rows({{0.3, -1.2}, {2.0, 0.5}});
  auto loss = [&] {
    double s = 0.0;
    for (double v : w.data()) s += v * v * v;
    return s;
  };
  Matrix g(2, 2);
  for (std::size_t i = 0; i < 4; ++i) g.data()[i] = 3.0 * w.data()[i] * w.data()[i];
  Matrix* params[] = {&w};
  EXPECT_LT(fd_gradcheck(loss, params, std::span<const Matrix>(&g, 1), 1e-5), 1e-8);
  g(0, 0) *= 1.01;
  EXPECT_GT(fd_gradcheck(loss, params, std::span<const Matrix>(&g, 1), 1e-5), 1e-3);
  EXPECT_THROW(fd_gradcheck(loss, params, std::span<const Matrix>(&g, 1), 1.0), std::invalid_argument);
}

TEST(TextIo, FormatDoubleRoundTrips) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.normal() * std::pow(10.0, static_cast<double>(rng.uniform_int(20)) - 10.0);
    EXPECT_EQ(parse_double(format_double(x), "t"), x);
  }
}

TEST(TextIo, ParseErrorsNameTheLocation) {
  try {
    parse_double("abc", "file.txt:3");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("file.txt:3"), std::string::npos);
  }
  EXPECT_THROW(parse_count("-1", "x"), InputError);
}

TEST(TextIo, ModelFileRoundTrip) {
  ModelFile f;
  f.kind = "demo";
  f.meta["dims"] = "2";
  f.blocks.emplace_back("A", LabeledMatrix{{"x", "y"}, Matrix::from_rows({{1.5, -2}, {0, 1e-300}})});
  const auto text = f.serialize();
  const auto g = ModelFile::parse(text, "mem");
  EXPECT_EQ(g.kind, "demo");
  EXPECT_EQ(g.meta_value("dims"), "2");
  EXPECT_EQ(g.block("A").values, f.blocks[0].second.values);
  EXPECT_EQ(g.block("A").labels, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(g.serialize(), text);
  EXPECT_THROW(g.block("B"), InputError);
}

TEST(TextIo, MalformedBlocksRejected) {
  EXPECT_THROW(ModelFile::parse("#cemb demo\n#matrix A\n2 2\nx 1 2\n", "mem"), InputError);
  EXPECT_THROW(ModelFile::parse("#cemb demo\n#matrix A\n1 2\nx 1 2 3\n", "mem"), InputError);
  EXPECT_THROW(ModelFile::parse("#cemb demo\n#matrix A\n1 2\nx 1 zz\n", "mem"), InputError);
}
