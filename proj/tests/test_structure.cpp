#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "nilgeo/structure.hpp"
#include "support.hpp"

using namespace nilgeo;
using testsupport::random_skew;

namespace {

SkewMatrix basis_q(int a) { return SkewMatrix(so4::quaternion_basis()[a]); }
SkewMatrix basis_h(int a) { return SkewMatrix(so4::skew_quaternion_basis()[a]); }

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST(PoppNormalize, GramSchmidtExamples) {
    {
        const CorankTwoStructure s = popp_normalize(basis_q(0), basis_q(0) + basis_q(1));
        EXPECT_LE((s.L1().entries() - basis_q(0).entries()).norm(), 1e-12);
        EXPECT_LE((s.L2().entries() - basis_q(1).entries()).norm(), 1e-12);
        EXPECT_TRUE(s.normalized());
    }
    {
        const CorankTwoStructure s = popp_normalize(2.0 * basis_h(0), 3.0 * basis_h(2));
        EXPECT_LE((s.L1().entries() - basis_h(0).entries()).norm(), 1e-12);
        EXPECT_LE((s.L2().entries() - basis_h(2).entries()).norm(), 1e-12);
    }
    EXPECT_THROW(popp_normalize(basis_q(0), basis_q(0)), DependentPair);
    EXPECT_THROW(popp_normalize(basis_q(0), SkewMatrix::zero(4)), DependentPair);
}

TEST(PoppNormalize, IsAProjection) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const SkewMatrix a = random_skew(5, rng), b = random_skew(5, rng);
        const CorankTwoStructure s1 = popp_normalize(a, b);
        const CorankTwoStructure s2 = popp_normalize(s1.L1(), s1.L2());
        EXPECT_LE((s1.L1().entries() - s2.L1().entries()).norm(), 1e-12);
        EXPECT_LE((s1.L2().entries() - s2.L2().entries()).norm(), 1e-12);
        EXPECT_NEAR(hs_inner(s1.L1(), s1.L1()), 1.0, 1e-12);
        EXPECT_NEAR(hs_inner(s1.L2(), s1.L2()), 1.0, 1e-12);
        EXPECT_NEAR(hs_inner(s1.L1(), s1.L2()), 0.0, 1e-12);
    }
}

TEST(HausdorffDimension, WeightedDimension) {
    std::mt19937_64 rng(3);
    for (int p : {4, 5, 6}) {
        const CorankTwoStructure s = popp_normalize(random_skew(p, rng), random_skew(p, rng));
        EXPECT_EQ(hausdorff_dimension(s), p + 4);
    }
}

TEST(Pencil, CachedCombination) {
    const CorankTwoStructure s = popp_normalize(basis_q(0), basis_h(0));
    EXPECT_LE((pencil(s, 0.0, 1.0).matrix.entries() - s.L1().entries()).norm(), 1e-14);
    EXPECT_LE((pencil(s, M_PI / 2, 2.0).matrix.entries() - 2.0 * s.L2().entries()).norm(), 1e-14);
    EXPECT_LE((pencil(s, M_PI, 1.0).matrix.entries() + s.L1().entries()).norm(), 1e-14);
}

TEST(Pencil, MaxModulusScalesExactlyInR) {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 20; ++trial) {
        const CorankTwoStructure s = popp_normalize(random_skew(6, rng), random_skew(6, rng));
        const double theta = 0.37 * trial;
        const double m1 = max_modulus(pencil(s, theta, 1.0).matrix);
        const double m3 = max_modulus(pencil(s, theta, 3.0).matrix);
        EXPECT_NEAR(m3, 3.0 * m1, 1e-13 * (1.0 + m3));
    }
}

TEST(Family, CommutingBuiltin) {
    const StructureFamily f = builtin_commuting();
    Vec xi(1);
    xi << 0.3;
    const CorankTwoStructure s = eval_family(f, xi);
    const Mat c = s.L1().entries() * s.L2().entries() - s.L2().entries() * s.L1().entries();
    EXPECT_LE(c.norm(), 1e-14);
}

TEST(Family, GenericBuiltinResonanceScan) {
    // Dense scan over (theta, xi1): the top multiplicity is 2 exactly where
    // the skew-quaternion part of the pencil vanishes (xi = 0 or sin theta = 0).
    const StructureFamily f = builtin_generic();
    for (int it = 0; it < 12; ++it) {
        const double theta = -1.5 + 3.0 * it / 11.0;
        for (int ix = 0; ix < 12; ++ix) {
            const double x1 = -0.5 + 1.0 * ix / 11.0;
            Vec xi(3);
            xi << x1, 0.0, 0.0;
            const SkewMatrix a = family_pencil_matrix(f, theta, xi);
            const bool resonant_analytic =
                std::abs(std::sin(theta)) * std::abs(x1) < 1e-12;
            EXPECT_EQ(multiplicity_at_top(a, 1e-8) >= 2, resonant_analytic)
                << "theta=" << theta << " x1=" << x1;
        }
    }
}

TEST(Family, EvaluationIsLipschitzOnCompactBoxes) {
    const StructureFamily f = builtin_generic();
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> box(-0.4, 0.4);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        Vec a(3), b(3);
        for (int i = 0; i < 3; ++i) {
            a(i) = box(rng);
            b(i) = a(i) + 1e-3 * box(rng);
        }
        const CorankTwoStructure sa = eval_family(f, a);
        const CorankTwoStructure sb = eval_family(f, b);
        const double num = (sa.L2().entries() - sb.L2().entries()).norm() +
                           (sa.L1().entries() - sb.L1().entries()).norm();
        worst = std::max(worst, num / (a - b).norm());
    }
    EXPECT_LT(worst, 50.0);
}

TEST(FamilyIO, RoundTripIsBitIdentical) {
    const StructureFamily f = builtin_generic();
    const auto path = temp_file("nilgeo_roundtrip.family");
    save_family(f, path.string());
    const StructureFamily g = load_family(path.string());

    EXPECT_EQ(g.p, f.p);
    EXPECT_EQ(g.param_dim, f.param_dim);
    EXPECT_EQ(g.name, f.name);
    ASSERT_EQ(g.l1_terms.size(), f.l1_terms.size());
    ASSERT_EQ(g.l2_terms.size(), f.l2_terms.size());
    for (std::size_t t = 0; t < f.l2_terms.size(); ++t) {
        EXPECT_EQ(g.l2_terms[t].exponents, f.l2_terms[t].exponents);
        EXPECT_EQ((g.l2_terms[t].coeff.entries() - f.l2_terms[t].coeff.entries()).norm(), 0.0);
    }
    // Save of the reload echoes the exact same bytes.
    EXPECT_EQ(save_family_string(g), save_family_string(f));
    std::filesystem::remove(path);
}

TEST(FamilyIO, AwkwardDecimalsSurviveRoundTrip) {
    StructureFamily f;
    f.p = 4;
    f.param_dim = 2;
    f.name = "decimals";
    Mat m = Mat::Zero(4, 4);
    m(0, 1) = 0.1 + 0.2; // not representable exactly
    m(1, 0) = -m(0, 1);
    m(2, 3) = 1.0 / 3.0;
    m(3, 2) = -m(2, 3);
    f.l1_terms.push_back({{0, 0}, SkewMatrix(m)});
    f.l2_terms.push_back({{1, 0}, SkewMatrix((0.5 * m).eval())});

    const StructureFamily g = load_family_string(save_family_string(f));
    EXPECT_EQ(g.l1_terms[0].coeff.entries()(0, 1), m(0, 1));
    EXPECT_EQ(g.l2_terms[0].coeff.entries()(2, 3), 0.5 * m(2, 3));
}

TEST(FamilyIO, ParseDiagnosticsCarryLineNumbers) {
    const std::string good = save_family_string(builtin_commuting());

    auto expect_error_at_line = [](const std::string& text, int line) {
        try {
            load_family_string(text);
            FAIL() << "expected ParseError";
        } catch (const ParseError& e) {
            EXPECT_EQ(e.line(), line) << e.what();
        }
    };

    expect_error_at_line("format = nilgeo-family/2\n", 1);
    expect_error_at_line("format = nilgeo-family/1\nbogus_key = 3\n", 2);
    expect_error_at_line(
        "format = nilgeo-family/1\np = 4\nparam_dim = 1\n[L1]\nmonomial 0 0\n", 5);
    expect_error_at_line(
        "format = nilgeo-family/1\np = 4\nparam_dim = 1\n[L1]\nmonomial 0\nentry 1 0 2.0\n", 6);
    expect_error_at_line(
        "format = nilgeo-family/1\np = 4\nparam_dim = 1\n[L1]\nmonomial 0\nentry 0 1 zzz\n", 6);

    // Dependent pairs at specific points are reported with the point, not at load.
    StructureFamily dep = load_family_string(good);
    dep.l2_terms = dep.l1_terms;
    Vec xi(1);
    xi << 0.0;
    try {
        eval_family(dep, xi);
        FAIL() << "expected DependentPair";
    } catch (const DependentPair& e) {
        EXPECT_NE(std::string(e.what()).find("xi = (0)"), std::string::npos);
    }
}

TEST(ResonanceLocate, GenericFamilyConvergesToStratum) {
    // Seeded away from the trivial sin(theta) = 0 planes, the only resonance
    // in reach is xi = 0, where the transversal coordinate vanishes.
    const StructureFamily f = builtin_generic();
    Vec seed(3);
    seed << 0.1, 0.0, 0.0;
    const ResonancePoint z = resonance_locate(f, M_PI / 2, seed);
    EXPECT_LE(z.gap, 1e-9);
    EXPECT_GE(z.top_multiplicity, 2);
    EXPECT_LE(z.xi.norm(), 1e-6);
    EXPECT_LE(std::abs(z.xi(0)), 1e-6);
    // Analytic oracle for this family: the vanishing part has norm
    // |sin(theta)| |xi| / sqrt(1 + |xi|^2).
    const double vanishing =
        std::abs(std::sin(z.theta)) * z.xi.norm() / std::sqrt(1.0 + z.xi.squaredNorm());
    EXPECT_LE(vanishing, 1e-9);
}

TEST(ResonanceLocate, CommutingFamilyReturnsSeedPlane) {
    // Pure L1 at theta = 0 already has a double top eigenvalue.
    const StructureFamily f = builtin_commuting();
    Vec seed(1);
    seed << 0.0;
    const ResonancePoint z = resonance_locate(f, 0.0, seed);
    EXPECT_LE(z.gap, 1e-9);
    EXPECT_LE(std::abs(z.theta), 1e-6);
    EXPECT_GE(z.top_multiplicity, 2);
}

TEST(ResonanceLocate, NoResonanceInRegion) {
    // Commuting block spectra (1,2,3) and (3,1,2): top collisions exist only
    // far from theta = 0.1, outside the search box.
    StructureFamily f;
    f.p = 6;
    f.param_dim = 1;
    f.name = "no_res";
    Mat a = Mat::Zero(6, 6), b = Mat::Zero(6, 6);
    auto set_block = [](Mat& m, int blk, double w) {
        m(2 * blk, 2 * blk + 1) = -w;
        m(2 * blk + 1, 2 * blk) = w;
    };
    set_block(a, 0, 1.0);
    set_block(a, 1, 2.0);
    set_block(a, 2, 3.0);
    set_block(b, 0, 3.0);
    set_block(b, 1, 1.0);
    set_block(b, 2, 2.0);
    f.l1_terms.push_back({{0}, SkewMatrix(a)});
    f.l2_terms.push_back({{0}, SkewMatrix(b)});

    Vec seed(1);
    seed << 0.0;
    ResonanceOptions opt;
    opt.search_radius = 0.15;
    EXPECT_THROW(resonance_locate(f, 0.1, seed, opt), NoResonance);

    // Oracle: the gap really is bounded below on a dense grid in the region.
    double min_gap = 1e30;
    for (int k = 0; k <= 300; ++k) {
        const double theta = -0.05 + 0.3 * k / 300.0;
        const SkewMatrix m = family_pencil_matrix(f, theta, seed);
        const SpectralData sd = eigen_moduli(m);
        min_gap = std::min(min_gap, sd.moduli[0] - sd.moduli[1]);
    }
    EXPECT_GT(min_gap, 0.1);
}

TEST(ResonanceLocate, TripleDetected) {
    // Three equal blocks in L1: at theta = 0 the top three moduli collide.
    StructureFamily f;
    f.p = 6;
    f.param_dim = 1;
    f.name = "triple";
    Mat a = Mat::Zero(6, 6), b = Mat::Zero(6, 6);
    for (int blk = 0; blk < 3; ++blk) {
        a(2 * blk, 2 * blk + 1) = -2.0;
        a(2 * blk + 1, 2 * blk) = 2.0;
    }
    b(0, 1) = -1.0;
    b(1, 0) = 1.0;
    b(2, 4) = 0.3;
    b(4, 2) = -0.3;
    f.l1_terms.push_back({{0}, SkewMatrix(a)});
    f.l2_terms.push_back({{0}, SkewMatrix(b)});

    Vec seed(1);
    seed << 0.0;
    ResonanceOptions opt;
    opt.search_radius = 0.05;
    EXPECT_THROW(resonance_locate(f, 0.0, seed, opt), TripleDetected);
}

TEST(ResonanceLocate, ClassificationConsistentWithIsDouble) {
    const StructureFamily f = builtin_generic();
    Vec seed(3);
    seed << 0.05, -0.03, 0.08;
    const ResonancePoint z = resonance_locate(f, 1.2, seed);
    const SkewMatrix a = family_pencil_matrix(f, z.theta, z.xi);
    EXPECT_TRUE(is_double(a, 1e-8));
    EXPECT_GE(multiplicity_at_top(a, 1e-8 * (1.0 + max_modulus(a))), 2);
}

TEST(VersalRankCheck, GenericFamilyHasFullRank) {
    const StructureFamily f = builtin_generic();
    Vec xi = Vec::Zero(3);
    const RankReport rep = versal_rank_check(f, M_PI / 2, xi, 1e-4);
    EXPECT_EQ(rep.rank, 3);
    EXPECT_TRUE(rep.property_r);

    // Brute-force oracle: sample q over parameter offsets on a small sphere;
    // full rank means the image spans all three directions.
    const Mat ref = eigen_moduli(family_pencil_matrix(f, M_PI / 2, xi)).block_frame;
    Mat samples(3, 32);
    std::mt19937_64 rng(7);
    for (int k = 0; k < 32; ++k) {
        Vec d = testsupport::random_unit(3, rng);
        Vec x = 1e-3 * d;
        samples.col(k) = family_versal_q(f, M_PI / 2, x, ref);
    }
    Eigen::JacobiSVD<Mat> svd(samples);
    EXPECT_GT(svd.singularValues()(2), 1e-5 * svd.singularValues()(0));
}

TEST(VersalRankCheck, DegenerateFamilyHasRankOne) {
    const StructureFamily f = builtin_degenerate();
    Vec xi = Vec::Zero(3);
    const RankReport rep = versal_rank_check(f, 0.0, xi, 1e-4);
    EXPECT_EQ(rep.rank, 1);
    EXPECT_FALSE(rep.property_r);
}

TEST(VersalRankCheck, RankInvariantUnderGaugeChange) {
    // Conjugating the whole family by a constant orthogonal matrix keeps the
    // rank; so does re-running with the threaded gauge of a nearby point.
    const StructureFamily f = builtin_generic();
    std::mt19937_64 rng(1234);
    const Mat g = testsupport::random_orthogonal(4, rng);

    StructureFamily fc = f;
    auto conj_terms = [&](std::vector<FamilyTerm>& terms) {
        for (auto& t : terms) {
            const Mat c = g.transpose() * t.coeff.entries() * g;
            t.coeff = SkewMatrix(0.5 * (c - c.transpose().eval()));
        }
    };
    conj_terms(fc.l1_terms);
    conj_terms(fc.l2_terms);

    Vec xi = Vec::Zero(3);
    EXPECT_EQ(versal_rank_check(fc, M_PI / 2, xi, 1e-4).rank, 3);
    EXPECT_EQ(versal_rank_check(f, M_PI / 2 + 0.02, xi, 1e-4).rank, 3);
}
