// linalg, rng, sampling and solver.

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "kaczmarz/instances.hpp"
#include "kaczmarz/lemmas.hpp"
#include "kaczmarz/linalg.hpp"
#include "kaczmarz/rng.hpp"
#include "kaczmarz/sampling.hpp"
#include "kaczmarz/solver.hpp"

using namespace kaczmarz;

namespace {

Mat random_rank(Eigen::Index m, Eigen::Index n, Eigen::Index r, std::uint64_t seed) {
    return gaussian(m, r, seed) * gaussian(r, n, seed + 1);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

// ---------------------------------------------------------------- rng

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
    Rng c(43);
    EXPECT_NE(Rng(42).uniform(), c.uniform());
}

TEST(Rng, UniformInUnitInterval) {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Rng, DerivedSeedsAreIndependentOfOtherCells) {
    EXPECT_EQ(derive_seed(5, 3, 7), derive_seed(5, 3, 7));
    EXPECT_NE(derive_seed(5, 3, 7), derive_seed(5, 3, 8));
    EXPECT_NE(derive_seed(5, 3, 7), derive_seed(5, 4, 7));
    EXPECT_NE(derive_seed(5, 3, 7), derive_seed(6, 3, 7));
}

// ---------------------------------------------------------------- linalg

TEST(Linalg, RankTolRejectsOutOfRange) {
    EXPECT_THROW(RankTol(0.0), ParamError);
    EXPECT_THROW(RankTol(1.0), ParamError);
    EXPECT_NO_THROW(RankTol(1e-8));
}

TEST(Linalg, SvdThinDiagonal) {
    Mat m(2, 2);
    m << 1, 0, 0, 3;
    const auto f = svd_thin(m);
    EXPECT_NEAR(f.sigma(0), 3.0, 1e-15);
    EXPECT_NEAR(f.sigma(1), 1.0, 1e-15);
}

TEST(Linalg, SvdThinZero) {
    const auto f = svd_thin(Mat::Zero(2, 2));
    EXPECT_EQ(f.sigma(0), 0.0);
    EXPECT_EQ(f.sigma(1), 0.0);
    EXPECT_EQ(f.rank(RankTol{}), 0);
}

TEST(Linalg, SvdThinReconstructs) {
    const Mat m = gaussian(5, 3, 9);
    const auto f = svd_thin(m);
    const Mat back = f.U * f.sigma.asDiagonal() * f.V.transpose();
    EXPECT_LE((back - m).norm(), 1e-10 * std::sqrt(spectral_norm_sq(m)));
    EXPECT_LE((f.U.transpose() * f.U - Mat::Identity(3, 3)).norm(), 1e-12);
    EXPECT_LE((f.V.transpose() * f.V - Mat::Identity(3, 3)).norm(), 1e-12);
    for (Eigen::Index i = 1; i < f.sigma.size(); ++i) EXPECT_GE(f.sigma(i - 1), f.sigma(i));
}

TEST(Linalg, SvdThinRejectsNonFinite) {
    Mat m = Mat::Ones(2, 2);
    m(0, 1) = std::nan("");
    EXPECT_THROW(svd_thin(m), InvalidMatrix);
}

TEST(Linalg, LeastNormSolveExamples) {
    Mat m(1, 2);
    m << 1, 1;
    Vec y(1);
    y << 2;
    const Vec z = least_norm_solve(m, y);
    EXPECT_NEAR(z(0), 1.0, 1e-14);
    EXPECT_NEAR(z(1), 1.0, 1e-14);

    Vec y3(3);
    y3 << 1, 2, 3;
    EXPECT_LE((least_norm_solve(Mat::Identity(3, 3), y3) - y3).norm(), 1e-15);
    EXPECT_THROW(least_norm_solve(Mat::Identity(3, 3), Vec::Ones(2)), DimError);
}

TEST(Linalg, LeastNormSolveWideIsInRowSpace) {
    const Mat m = gaussian(3, 6, 17);
    const Vec y = gaussian(3, 1, 18).col(0);
    const Vec z = least_norm_solve(m, y);
    EXPECT_LE((m * z - y).norm(), 1e-12 * y.norm());
    // component along null(M) from the SVD oracle
    Eigen::JacobiSVD<Mat> full(m, Eigen::ComputeFullV);
    const Mat null = full.matrixV().rightCols(3);
    EXPECT_LE((null.transpose() * z).norm(), 1e-12 * z.norm());
}

TEST(Linalg, LeastNormSolveIdempotentOnConsistentSystems) {
    const Mat m = random_rank(6, 5, 3, 4);
    const Vec y = m * gaussian(5, 1, 5).col(0);
    EXPECT_LE((m * least_norm_solve(m, y) - y).norm(), 1e-9 * y.norm());
}

TEST(Linalg, SmallestPositiveEig) {
    Vec d(3);
    d << 0, 2, 5;
    EXPECT_NEAR(smallest_positive_eig(Mat(d.asDiagonal())), 2.0, 1e-15);
    EXPECT_EQ(smallest_positive_eig(Mat::Zero(3, 3)), 0.0);

    const Mat a = gaussian(4, 7, 21);
    const double smin = svd_thin(a).sigma(3);
    EXPECT_LE(rel(smallest_positive_eig(a.transpose() * a), smin * smin), 1e-9);
}

TEST(Linalg, SmallestPositiveEigRejectsAsymmetric) {
    Mat g(2, 2);
    g << 1, 2, 0, 1;
    EXPECT_THROW(smallest_positive_eig(g), InvalidMatrix);
}

TEST(Linalg, RangeBasis) {
    EXPECT_EQ(range_basis(Mat::Identity(3, 3)).cols(), 3);

    const Mat r1 = Eigen::Vector2d(1, 2) * Eigen::RowVector3d(1, 1, 1);
    const Mat q = range_basis(r1);
    ASSERT_EQ(q.cols(), 1);
    EXPECT_NEAR(std::abs(q(0, 0)), 1 / std::sqrt(5.0), 1e-14);
    EXPECT_NEAR(std::abs(q(1, 0)), 2 / std::sqrt(5.0), 1e-14);

    const Mat m = gaussian(6, 4, 3);
    const Mat b = range_basis(m);
    EXPECT_LE((b.transpose() * b - Mat::Identity(4, 4)).norm(), 1e-12);
    const Mat resid = m - b * (b.transpose() * m);
    EXPECT_LE(std::sqrt(spectral_norm_sq(resid)), 1e-10 * std::sqrt(spectral_norm_sq(m)));
}

TEST(Linalg, ComplementBasisCoordinates) {
    const Mat full = Mat::Identity(3, 3);
    const Mat e1 = Mat::Identity(3, 1);
    const Mat w = complement_basis(full, e1);
    ASSERT_EQ(w.cols(), 2);
    EXPECT_LE(w.row(0).norm(), 1e-15);
    EXPECT_EQ(complement_basis(full, full).cols(), 0);
    EXPECT_EQ(complement_basis(full, Mat(3, 0)).cols(), 3);
}

TEST(Linalg, ComplementBasisNested) {
    const Mat full = range_basis(gaussian(8, 5, 31));
    const Mat sub = range_basis(full * gaussian(5, 2, 32));
    const Mat w = complement_basis(full, sub);
    ASSERT_EQ(w.cols(), 3);
    EXPECT_LE((w.transpose() * w - Mat::Identity(3, 3)).norm(), 1e-12);
    EXPECT_LE((sub.transpose() * w).norm(), 1e-12);
    Mat both(8, 5);
    both << sub, w;
    EXPECT_LE((both * both.transpose() - full * full.transpose()).norm(), 1e-12);
}

TEST(Linalg, ComplementBasisRejectsOutsideSubspace) {
    const Mat full = Mat::Identity(3, 2);
    Mat sub = Mat::Zero(3, 1);
    sub(2, 0) = 1.0;
    EXPECT_THROW(complement_basis(full, sub), SubspaceError);
    EXPECT_THROW(complement_basis(full, Mat::Identity(3, 3)), SubspaceError);
}

TEST(Linalg, SpectralNormSq) {
    Mat m(2, 3);
    m << 3, 0, 0, 0, 4, 0;
    EXPECT_NEAR(spectral_norm_sq(m), 16.0, 1e-13);
}

TEST(LinalgProperties, PseudoinverseLowerBound) { EXPECT_TRUE(lemmas::lemma_pinv_lower(1).passed); }
TEST(LinalgProperties, ScaledPseudoinverse) { EXPECT_TRUE(lemmas::lemma_scaled_pinv(2).passed); }
TEST(LinalgProperties, RowSpaceLowerBound) { EXPECT_TRUE(lemmas::lemma_row_space_lower(3).passed); }

// ---------------------------------------------------------------- sampling

namespace {

JointTable table1() {
    // (1,1): 1/2, (2,3): 1/4, (3,2): 1/4
    return {3, 2, {{{0, 0}, 0.5}, {{1, 2}, 0.25}, {{2, 1}, 0.25}}};
}

}  // namespace

TEST(Sampling, MarginalsTable1) {
    const Marginals p = marginals(table1());
    for (int i = 0; i < 2; ++i) {
        EXPECT_DOUBLE_EQ(p(i, 0), 0.5);
        EXPECT_DOUBLE_EQ(p(i, 1), 0.25);
        EXPECT_DOUBLE_EQ(p(i, 2), 0.25);
    }
}

TEST(Sampling, MarginalsSingleTuple) {
    // rows 1 and 3 never sampled: the table itself is rejected
    EXPECT_THROW(JointTable(3, 2, {{{1, 1}, 1.0}}), CoverageError);
    const JointTable ok(1, 2, {{{0, 0}, 1.0}});
    EXPECT_DOUBLE_EQ(marginals(ok)(1, 0), 1.0);
}

TEST(Sampling, MarginalsTable3) {
    // m = 3, q = 2, all ordered pairs; diagonal tuples 1/6, off-diagonal 1/12
    std::vector<TupleProb> e;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) e.push_back({{a, b}, a == b ? 1.0 / 6 : 1.0 / 12});
    const Marginals p = marginals(JointTable(3, 2, e));
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(p(0, j), 1.0 / 3, 1e-15);
}

TEST(Sampling, JointTableValidation) {
    EXPECT_THROW(JointTable(2, 1, {{{0}, 0.5}, {{1}, 0.4}}), ParamError);
    EXPECT_THROW(JointTable(2, 1, {{{0}, 0.5}, {{0}, 0.5}}), ParamError);
    EXPECT_THROW(JointTable(2, 1, {{{0}, 1.0}, {{1}, 0.0}}), CoverageError);
    EXPECT_THROW(JointTable(2, 1, {{{0}, 1.5}, {{1}, -0.5}}), ParamError);
    EXPECT_THROW(JointTable(2, 2, {{{0}, 1.0}}), ParamError);
}

TEST(Sampling, EffectiveSet) {
    EXPECT_EQ(effective_set(std::vector<int>{0, 0, 1}), (IndexSet{0, 1}));
    EXPECT_EQ(effective_set(std::vector<int>{2, 2, 2}), (IndexSet{2}));
    EXPECT_EQ(effective_set(std::vector<int>{1, 0, 1}), (IndexSet{0, 1}));
}

TEST(Sampling, EffsetProbPreimage) {
    // the six tuples over {1,2} with both indices present, each 1/12, plus (3,3,3) and (4,4,4)
    std::vector<TupleProb> e = {{{0, 0, 1}, 1.0 / 12}, {{0, 1, 0}, 1.0 / 12}, {{1, 0, 0}, 1.0 / 12},
                                {{0, 1, 1}, 1.0 / 12}, {{1, 0, 1}, 1.0 / 12}, {{1, 1, 0}, 1.0 / 12},
                                {{2, 2, 2}, 0.25},     {{3, 3, 3}, 0.25}};
    const JointTable t(4, 3, e);
    EXPECT_NEAR(effset_prob(t, {0, 1}), 0.5, 1e-15);
    EXPECT_EQ(effset_prob(t, {0}), 0.0);
}

TEST(Sampling, EffsetProbTable2) {
    // ordered pairs of distinct rows of a 3-row matrix, p_12 = p_21 = 1/6
    std::vector<TupleProb> e;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            if (a != b) e.push_back({{a, b}, 1.0 / 6});
    const JointTable t(3, 2, e);
    EXPECT_NEAR(effset_prob(t, {0, 1}), 1.0 / 3, 1e-15);
    EXPECT_NEAR(effset_prob(JointTable(1, 2, {{{0, 0}, 1.0}}), {0}), 1.0, 0.0);
}

TEST(Sampling, EffsetProbSumsToOne) {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        const JointTable table = lemmas::random_joint_table(4, 3, false, rng);
        const SetScheme s = effective_scheme(table);
        double total = 0.0;
        for (const auto& w : s.sets()) total += effset_prob(table, w.rows);
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Sampling, PhatClosedForms) {
    const Vec pave = phat(natural_paving(6, 2));
    for (Eigen::Index j = 0; j < 6; ++j) EXPECT_NEAR(pave(j), 1.0 / 3, 1e-15);
    const Vec uni = phat(uniform_scheme(3, 2));
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(uni(j), 2.0 / 3, 1e-15);
    const Vec non = phat(nonunique_scheme(3, 2));
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(non(j), 0.5, 1e-15);
}

TEST(Sampling, PhatBinomialRatio) {
    // C(m-1, q-1) / C(m, q) = q / m for the uniform scheme
    const Vec p = phat(uniform_scheme(7, 3));
    for (Eigen::Index j = 0; j < 7; ++j) EXPECT_NEAR(p(j), 3.0 / 7, 1e-14);
    // sum_t C(m-1, t-1) / sum_t C(m, t) for the nonunique scheme
    const Vec pn = phat(nonunique_scheme(6, 3));
    const double expect = (1.0 + 5 + 10) / (6.0 + 15 + 20);
    for (Eigen::Index j = 0; j < 6; ++j) EXPECT_NEAR(pn(j), expect, 1e-14);
}

TEST(Sampling, NaturalPaving) {
    const auto s = natural_paving(4, 2);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.sets()[0].rows, (IndexSet{0, 1}));
    EXPECT_EQ(s.sets()[1].rows, (IndexSet{2, 3}));
    EXPECT_EQ(natural_paving(6, 3).sets()[1].rows, (IndexSet{3, 4, 5}));
    EXPECT_EQ(natural_paving(100, 10).size(), 10u);
    EXPECT_THROW(natural_paving(5, 2), PartitionError);
}

TEST(Sampling, PavingMustPartition) {
    EXPECT_THROW(SetScheme(3, 2, SchemeKind::paving, {{{0, 1}, 0.5}, {{1, 2}, 0.5}}), PartitionError);
    EXPECT_NO_THROW(SetScheme(3, 2, SchemeKind::custom, {{{0, 1}, 0.5}, {{1, 2}, 0.5}}));
    EXPECT_THROW(SetScheme(3, 2, SchemeKind::custom, {{{0, 1}, 1.0}, {{2}, 0.0}}), CoverageError);
}

TEST(Sampling, BlockProbs) {
    const auto p = block_probs(Mat::Identity(4, 4), natural_paving(4, 2));
    EXPECT_DOUBLE_EQ(p.sets()[0].prob, 0.5);
    EXPECT_EQ(p.kind(), SchemeKind::paving);

    Mat a = Mat::Zero(2, 2);
    a(0, 0) = 1.0;
    a(1, 1) = 2.0;
    const auto q = block_probs(a, natural_paving(2, 1));
    EXPECT_NEAR(q.sets()[0].prob, 0.2, 1e-15);
    EXPECT_NEAR(q.sets()[1].prob, 0.8, 1e-15);
    EXPECT_DOUBLE_EQ(block_probs(a, natural_paving(2, 2)).sets()[0].prob, 1.0);
    EXPECT_THROW(block_probs(Mat::Zero(2, 2), natural_paving(2, 1)), DegenerateError);
}

TEST(Sampling, BlockWeightNames) {
    EXPECT_EQ(block_weight_from_string("spectral"), BlockWeight::spectral);
    EXPECT_THROW(block_weight_from_string("l1"), ConfigError);
}

TEST(Sampling, EqualWeightSchemes) {
    const auto u = uniform_scheme(3, 2);
    ASSERT_EQ(u.size(), 3u);
    EXPECT_EQ(u.sets()[0].rows, (IndexSet{0, 1}));
    EXPECT_EQ(u.sets()[1].rows, (IndexSet{0, 2}));
    EXPECT_EQ(u.sets()[2].rows, (IndexSet{1, 2}));
    EXPECT_NEAR(u.sets()[0].prob, 1.0 / 3, 1e-15);

    const auto n = nonunique_scheme(3, 2);
    ASSERT_EQ(n.size(), 6u);
    for (const auto& s : n.sets()) EXPECT_NEAR(s.prob, 1.0 / 6, 1e-15);

    const auto one = uniform_scheme(2, 2);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_DOUBLE_EQ(one.sets()[0].prob, 1.0);

    EXPECT_THROW(uniform_scheme(30, 10), SupportTooLarge);
}

TEST(Sampling, DrawSingleSet) {
    const auto s = uniform_scheme(2, 2);
    Rng rng(1);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(draw(s, rng), (IndexSet{0, 1}));
}

TEST(Sampling, DrawFrequencies) {
    const SetScheme s(2, 1, SchemeKind::paving, {{{0}, 0.25}, {{1}, 0.75}});
    const SetSampler sampler(s);
    Rng rng(99);
    int first = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) first += sampler.draw_index(rng) == 0 ? 1 : 0;
    EXPECT_NEAR(static_cast<double>(first) / n, 0.25, 0.01);
}

TEST(Sampling, DrawSkipsZeroProbabilitySets) {
    const SetScheme s(3, 2, SchemeKind::custom, {{{0}, 0.4}, {{1}, 0.0}, {{0, 1}, 0.0}, {{1, 2}, 0.2}, {{2}, 0.4}});
    EXPECT_THROW(SetScheme(2, 1, SchemeKind::custom, {{{0}, 1.0}, {{1}, 0.0}}), CoverageError);
    const SetSampler sampler(s);
    Rng rng(3);
    for (int i = 0; i < 5000; ++i) {
        const auto k = sampler.draw_index(rng);
        ASSERT_TRUE(k == 0 || k == 3 || k == 4);
    }
}

TEST(Sampling, DrawDeterministic) {
    const auto s = uniform_scheme(5, 2);
    Rng a(11), b(11);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(draw(s, a), draw(s, b));
}

TEST(Sampling, CanonicalTablePadsWithLastIndex) {
    const SetScheme s(3, 3, SchemeKind::custom, {{{0, 2}, 0.5}, {{1}, 0.5}});
    const JointTable t = canonical_joint_table(s);
    EXPECT_EQ(t.entries()[0].tuple, (std::vector<int>{0, 2, 2}));
    EXPECT_EQ(t.entries()[1].tuple, (std::vector<int>{1, 1, 1}));
    const SetScheme back = effective_scheme(t);
    EXPECT_EQ(back.sets()[0].rows, (IndexSet{0, 2}));
}

TEST(SamplingProperties, CoverageSandwich) { EXPECT_TRUE(lemmas::lemma_coverage_sandwich(4).passed); }

TEST(SamplingProperties, SchemeDerivedTablesCover) {
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        const JointTable table = lemmas::random_joint_table(5, 2, false, rng);
        const Marginals p = marginals(table);
        for (int j = 0; j < 5; ++j) EXPECT_GT(p.col(j).sum(), 0.0);
    }
}

// ---------------------------------------------------------------- solver

TEST(Solver, RkStepExamples) {
    const Mat a = Mat::Identity(2, 2);
    const Vec b = Eigen::Vector2d(1, 2);
    const Vec x = rk_step(a, b, Vec::Zero(2), 0);
    EXPECT_EQ(x, Vec(Eigen::Vector2d(1, 0)));
    EXPECT_EQ(rk_step(a, b, x, 0), x);

    Mat r(1, 2);
    r << 2, 0;
    const Vec y = rk_step(r, Vec::Constant(1, 4.0), Eigen::Vector2d(0, 5), 0);
    EXPECT_NEAR(y(0), 2.0, 1e-15);
    EXPECT_NEAR(y(1), 5.0, 1e-15);
    EXPECT_THROW(rk_step(Mat::Zero(1, 2), Vec::Zero(1), Vec::Zero(2), 0), ZeroRowError);
}

TEST(Solver, RkStepResidual) {
    const Mat a = gaussian(5, 4, 2);
    const Vec b = gaussian(5, 1, 3).col(0);
    const Vec x = gaussian(4, 1, 4).col(0);
    const Vec y = rk_step(a, b, x, 2);
    EXPECT_LE(std::abs(b(2) - a.row(2).dot(y)), 1e-12 * (std::abs(b(2)) + a.row(2).norm() * y.norm()));
}

TEST(Solver, RbskStepExamples) {
    const Mat a = Mat::Identity(4, 4);
    const Vec b = Eigen::Vector4d(1, 2, 3, 4);
    const Vec x = rbsk_step(a, b, Vec::Zero(4), {0, 1});
    EXPECT_LE((x - Vec(Eigen::Vector4d(1, 2, 0, 0))).norm(), 1e-15);
    EXPECT_THROW(rbsk_step(Mat::Zero(2, 2), Vec::Zero(2), Vec::Zero(2), {0, 1}), ZeroBlockError);

    const Mat w = gaussian(3, 5, 6);
    const Vec bw = w * gaussian(5, 1, 7).col(0);
    const Vec full = rbsk_step(w, bw, gaussian(5, 1, 8).col(0), {0, 1, 2});
    EXPECT_LE((w * full - bw).norm(), 1e-12 * bw.norm());
}

TEST(Solver, RbskStepPythagoras) {
    const Mat a = gaussian(6, 9, 12);
    const Vec xs = gaussian(9, 1, 13).col(0);
    const Vec b = a * xs;
    const Vec x = gaussian(9, 1, 14).col(0);
    const Vec y = rbsk_step(a, b, x, {1, 4});
    const double lhs = (x - xs).squaredNorm();
    const double rhs = (y - xs).squaredNorm() + (y - x).squaredNorm();
    EXPECT_LE(rel(rhs, lhs), 1e-9);
    // zero block residual and update in range(A_E^T)
    const IndexSet e{1, 4};
    const Mat ae = select_rows(a, e);
    EXPECT_LE((ae * y - select_entries(b, e)).norm(), 1e-10 * select_entries(b, e).norm());
    const Mat q = range_basis(ae.transpose());
    EXPECT_LE(((y - x) - q * (q.transpose() * (y - x))).norm(), 1e-10 * (y - x).norm());
}

TEST(Solver, ProjectorCacheMatchesFresh) {
    const Mat a = gaussian(12, 7, 15);
    const auto s = block_probs(a, natural_paving(12, 3));
    const BlockProjector cached(a, s, RankTol{}, true);
    const BlockProjector fresh(a, s, RankTol{}, false);
    const Vec b = gaussian(12, 1, 16).col(0);
    const Vec x = gaussian(7, 1, 17).col(0);
    for (std::size_t k = 0; k < s.size(); ++k) {
        EXPECT_LE((cached.correction(k, x, b).correction - fresh.correction(k, x, b).correction).norm(), 1e-13);
    }
}

TEST(Solver, SingleSetConvergesInOneStep) {
    const Mat a = gaussian(4, 6, 19);
    const auto sys = make_consistent_rhs(a, 20);
    const SetScheme s(4, 4, SchemeKind::paving, {{{0, 1, 2, 3}, 1.0}});
    const auto t = run_trial(a, sys.b, s, SolveConfig{}, 1, sys.x_star);
    EXPECT_EQ(t.iters, 1);
    EXPECT_TRUE(t.converged);
}

TEST(Solver, TraceDeterministic) {
    const Mat a = gaussian(20, 10, 21);
    const auto sys = make_consistent_rhs(a, 22);
    const auto s = block_probs(a, natural_paving(20, 5));
    const auto t1 = run_trial(a, sys.b, s, SolveConfig{}, 77, sys.x_star);
    const auto t2 = run_trial(a, sys.b, s, SolveConfig{}, 77, sys.x_star);
    EXPECT_EQ(t1.sq_errors, t2.sq_errors);
    EXPECT_EQ(t1.selected, t2.selected);
}

TEST(Solver, TraceMonotoneAndConvergesToLeastNorm) {
    const Mat a = gaussian(20, 40, 23);
    const auto sys = make_consistent_rhs(a, 24);
    const auto s = block_probs(a, natural_paving(20, 4));
    SolveConfig cfg;
    cfg.max_iter = 20000;
    const auto t = run_trial(a, sys.b, s, cfg, 5, sys.x_star);
    ASSERT_TRUE(t.converged);
    for (std::size_t k = 1; k < t.sq_errors.size(); ++k) {
        EXPECT_LE(t.sq_errors[k], t.sq_errors[k - 1] + 1e-12);
    }
    EXPECT_LT(t.rse.back(), cfg.rse_tol);
    EXPECT_FALSE(t.inconsistent);
}

TEST(Solver, IteratesStayInRowSpace) {
    const Mat a = gaussian(10, 25, 25);
    const auto sys = make_consistent_rhs(a, 26);
    const auto s = block_probs(a, natural_paving(10, 2));
    const BlockProjector proj(a, s, RankTol{}, true);
    const SetSampler sampler(s);
    const Mat q = range_basis(a.transpose());
    Rng rng(3);
    Vec x = Vec::Zero(25);
    for (int k = 0; k < 200; ++k) {
        x += proj.correction(sampler.draw_index(rng), x, sys.b).correction;
        ASSERT_LE((x - q * (q.transpose() * x)).norm(), 1e-9 * std::max(1.0, x.norm()));
    }
}

TEST(Solver, ConvergedWideSolutionIsLeastNorm) {
    const Mat a = gaussian(15, 30, 27);
    const auto sys = make_consistent_rhs(a, 28);
    const auto s = block_probs(a, natural_paving(15, 5));
    const BlockProjector proj(a, s, RankTol{}, true);
    const SetSampler sampler(s);
    const Vec ref = least_norm_solve(a, sys.b);
    SolveConfig cfg;
    cfg.max_iter = 20000;
    const auto t = run_trial(proj, sampler, sys.b, least_norm_reference(a, sys.x_star), cfg, 4);
    ASSERT_TRUE(t.converged);
    EXPECT_LE(std::sqrt(t.sq_errors.back()), std::sqrt(cfg.rse_tol) * ref.norm() * 1.01);
    EXPECT_LE((least_norm_reference(a, sys.x_star) - ref).norm(), 1e-10 * ref.norm());
}

TEST(Solver, InconsistentSystemIsFlagged) {
    const Mat a = gaussian(12, 3, 29);
    Vec b = gaussian(12, 1, 30).col(0);  // not in range(A)
    const auto s = block_probs(a, natural_paving(12, 4));
    SolveConfig cfg;
    cfg.max_iter = 50;
    const auto t = run_trial(a, b, s, cfg, 1, Vec::Zero(3) + Vec::Ones(3));
    EXPECT_TRUE(t.inconsistent);
}

TEST(Solver, ConfigValidation) {
    SolveConfig c;
    c.max_iter = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.max_iter = 1;
    c.rse_tol = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Solver, EmpiricalRateExamples) {
    TrialTrace t;
    t.sq_errors = {1, 0.5, 0.25, 0.125};
    EXPECT_NEAR(empirical_rate(t), 0.5, 1e-15);
    t.sq_errors = {1, 1};
    EXPECT_DOUBLE_EQ(empirical_rate(t), 1.0);
    t.sq_errors = {0, 0};
    EXPECT_THROW(empirical_rate(t), DegenerateError);
    t.sq_errors = {1};
    EXPECT_THROW(empirical_rate(t), DegenerateError);
}

TEST(Solver, EmpiricalRateIgnoresFloor) {
    TrialTrace t;
    t.sq_errors = {1, 0.25, 1e-20, 0.0};
    EXPECT_NEAR(empirical_rate(t), 0.25, 1e-15);
}

namespace {

std::vector<TrialTrace> identity_traces(int trials, std::uint64_t seed) {
    const Mat a = Mat::Identity(4, 4);
    const auto s = natural_paving(4, 2);
    const auto sys = make_consistent_rhs(a, seed);
    std::vector<TrialTrace> out;
    for (int t = 0; t < trials; ++t) out.push_back(run_trial(a, sys.b, s, SolveConfig{}, derive_seed(seed, 0, t), sys.x_star));
    return out;
}

}  // namespace

// Identity 4x4, two blocks of two: each step zeroes the error on the drawn
// block, so E||e_{k+1}||^2 = ||e_k||^2 / 2 exactly.
TEST(SolverIdentity, PooledContractionIsOneHalf) {
    const auto traces = identity_traces(1000, 2);
    EXPECT_NEAR(pooled_contraction(traces), 0.5, 0.03);
}

// The per-trial geometric mean is a different statistic: the run stops once
// both blocks have been hit, and with w ~ U(0,1) the unhit fraction and
// K ~ Geometric(1/2) the last useful step, E[w^(1/K)] = sum 2^-k k/(k+1) = 2 - 2 ln 2.
TEST(SolverIdentity, PerTrialGeometricMean) {
    const auto traces = identity_traces(4000, 3);
    double acc = 0.0;
    for (const auto& t : traces) acc += empirical_rate(t);
    EXPECT_NEAR(acc / traces.size(), 0.6137056388801094, 0.03);
}

TEST(SolverIdentity, PerTrialGeometricMeanOracle) {
    // closed form from the series itself
    double s = 0.0;
    for (int k = 1; k < 200; ++k) s += std::pow(0.5, k) * k / (k + 1.0);
    EXPECT_NEAR(s, 2.0 - 2.0 * std::log(2.0), 1e-15);
}
