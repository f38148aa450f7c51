#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "nilgeo/density.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace nilgeo;
using testsupport::fiber_density_moments;
using testsupport::random_skew;

namespace {

CorankTwoStructure structure_i_ihat() {
    return popp_normalize(SkewMatrix(so4::quaternion_basis()[0]),
                          SkewMatrix(so4::skew_quaternion_basis()[0]));
}

QuadratureSpec fast_spec() {
    QuadratureSpec q;
    q.theta_nodes = 16;
    q.r_nodes = 6;
    q.target_rel_err = 0.1;
    return q;
}

} // namespace

TEST(FiberDensity, MatchesExactMomentOracle) {
    // The Jacobian determinant is a quartic polynomial of the covector at
    // fixed (theta, r); its ball integral has a closed form through fourth
    // moments.  The product rule must reproduce it to rounding.
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    for (int p : {4, 5}) {
        for (int trial = 0; trial < 6; ++trial) {
            const CorankTwoStructure s =
                popp_normalize(random_skew(p, rng), random_skew(p, rng));
            const double theta = angle(rng);
            const double rcut = cut_time(s, theta, 1.0);
            const double r = (0.2 + 0.12 * trial) * rcut;
            const ExpMapData data = exp_map_data(s, theta, r);
            const double exact = fiber_density_moments(data);

            QuadratureSpec spec;
            spec.ball_scheme = BallScheme::product;
            const double got = fiber_density(s, theta, r, spec);
            EXPECT_NEAR(got, exact, 1e-10 * (1.0 + std::abs(exact)))
                << "p=" << p << " trial=" << trial;
        }
    }
}

TEST(FiberDensity, VanishesAtCutForCommutingPair) {
    const CorankTwoStructure s = structure_i_ihat();
    for (double theta : {0.0, 0.7, 1.9}) {
        const double a = cut_time(s, theta, 1.0);
        QuadratureSpec spec;
        spec.ball_scheme = BallScheme::product;
        EXPECT_LE(std::abs(fiber_density(s, theta, a, spec)), 1e-9);
    }
}

TEST(FiberDensity, PositiveForSmallRadii) {
    // Oracle: crude Monte Carlo of the Jacobian determinant at small r.
    std::mt19937_64 rng(33);
    const CorankTwoStructure s = structure_i_ihat();
    const double r = 0.05 * cut_time(s, 0.4, 1.0);
    const ExpMapData data = exp_map_data(s, 0.4, r);
    double mc = 0.0;
    int n = 0;
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int k = 0; k < 2000; ++k) {
        Vec x(4);
        for (int i = 0; i < 4; ++i) x(i) = gauss(rng);
        x *= std::pow(unif(rng), 0.25) / x.norm();
        mc += data.jacobian_det(x);
        ++n;
    }
    mc *= unit_ball_volume(4) / n;
    EXPECT_GT(mc, 0.0);

    QuadratureSpec spec;
    spec.ball_scheme = BallScheme::product;
    const double f = fiber_density(s, 0.4, r, spec);
    EXPECT_GT(f, 0.0);
    EXPECT_NEAR(f, mc, 0.2 * std::abs(f) + 1e-9);
}

TEST(FiberDensity, BackendsAgree) {
    std::mt19937_64 rng(55);
    const CorankTwoStructure s = popp_normalize(random_skew(4, rng), random_skew(4, rng));
    const double theta = 1.1, r = 0.5 * cut_time(s, theta, 1.0);
    QuadratureSpec prod, qmc;
    prod.ball_scheme = BallScheme::product;
    qmc.ball_scheme = BallScheme::qmc;
    const double fp = fiber_density(s, theta, r, prod);
    const double fq = fiber_density(s, theta, r, qmc);
    EXPECT_NEAR(fp, fq, 5e-3 * (1.0 + std::abs(fp)));
}

TEST(AngularSlice, PositiveAndEquivariantUnderPairRotation) {
    const CorankTwoStructure s = structure_i_ihat();
    const QuadratureSpec spec = fast_spec();

    const double alpha = 0.6;
    const SkewMatrix l1r(std::cos(alpha) * s.L1().entries() + std::sin(alpha) * s.L2().entries());
    const SkewMatrix l2r(-std::sin(alpha) * s.L1().entries() + std::cos(alpha) * s.L2().entries());
    const CorankTwoStructure srot(l1r, l2r, true);

    for (double theta : {0.3, 1.2, 2.0}) {
        const SliceResult w = angular_slice(s, theta, spec);
        EXPECT_GT(w.value, 0.0);
        const SliceResult wrot = angular_slice(srot, theta - alpha, spec);
        EXPECT_NEAR(w.value, wrot.value,
                    10.0 * (w.err_estimate + wrot.err_estimate) + 1e-10);
    }
}

TEST(AngularSlice, PeriodicAndContinuousOnGrid) {
    std::mt19937_64 rng(77);
    const CorankTwoStructure s = popp_normalize(random_skew(4, rng), random_skew(4, rng));
    const QuadratureSpec spec = fast_spec();

    auto sample = [&](int n) {
        std::vector<double> w(n + 1);
        for (int k = 0; k <= n; ++k) w[k] = angular_slice(s, 2.0 * M_PI * k / n, spec).value;
        return w;
    };
    auto max_jump = [](const std::vector<double>& w) {
        double m = 0.0;
        for (std::size_t k = 1; k < w.size(); ++k) m = std::max(m, std::abs(w[k] - w[k - 1]));
        return m;
    };

    const std::vector<double> w64 = sample(64);
    const SliceResult first = angular_slice(s, 0.0, spec);
    EXPECT_NEAR(w64.front(), w64.back(), 1e-9 + 10.0 * first.err_estimate); // 2 pi periodic

    // Grid-refinement oracle: a continuous W has jumps that shrink with the
    // grid; a discontinuity would keep the max jump pinned.
    const std::vector<double> w128 = sample(128);
    EXPECT_LE(max_jump(w128), 0.7 * max_jump(w64) + 10.0 * first.err_estimate + 1e-9);

    // No single jump is an outlier against the grid scale.
    std::vector<double> jumps;
    for (std::size_t k = 1; k < w64.size(); ++k) jumps.push_back(std::abs(w64[k] - w64[k - 1]));
    std::nth_element(jumps.begin(), jumps.begin() + 32, jumps.end());
    EXPECT_LE(max_jump(w64), 10.0 * jumps[32] + 1e-9);
}

TEST(BallVolume, InvariantUnderConjugationAndRotation) {
    std::mt19937_64 rng(88);
    const CorankTwoStructure s = popp_normalize(random_skew(4, rng), random_skew(4, rng));
    const QuadratureSpec spec = fast_spec();
    const DensityReport base = ball_volume(s, spec);

    // Orthogonal conjugation of both matrices.
    const Mat g = testsupport::random_orthogonal(4, rng);
    auto conj = [&](const SkewMatrix& m) {
        const Mat c = g.transpose() * m.entries() * g;
        return SkewMatrix(0.5 * (c - c.transpose().eval()));
    };
    const DensityReport conj_rep = ball_volume(CorankTwoStructure(conj(s.L1()), conj(s.L2()), true), spec);
    EXPECT_NEAR(conj_rep.volume, base.volume,
                2.0 * (base.rel_err_estimate + conj_rep.rel_err_estimate + 1e-9) * base.volume);

    // Rotation of the pair.
    const double alpha = 1.3;
    const SkewMatrix l1r(std::cos(alpha) * s.L1().entries() + std::sin(alpha) * s.L2().entries());
    const SkewMatrix l2r(-std::sin(alpha) * s.L1().entries() + std::cos(alpha) * s.L2().entries());
    const DensityReport rot_rep = ball_volume(CorankTwoStructure(l1r, l2r, true), spec);
    EXPECT_NEAR(rot_rep.volume, base.volume,
                2.0 * (base.rel_err_estimate + rot_rep.rel_err_estimate + 1e-9) * base.volume);
}

TEST(BallVolume, BackendsAgreeWithinOnePercent) {
    const CorankTwoStructure s = structure_i_ihat();
    QuadratureSpec prod = fast_spec(), qmc = fast_spec();
    prod.ball_scheme = BallScheme::product;
    qmc.ball_scheme = BallScheme::qmc;
    qmc.qmc_points = 8192;
    const DensityReport vp = ball_volume(s, prod);
    const DensityReport vq = ball_volume(s, qmc);
    EXPECT_NEAR(vp.volume, vq.volume, 0.01 * vp.volume);
    // Mutual agreement within the combined error estimates.
    EXPECT_LE(std::abs(vp.volume - vq.volume),
              3.0 * (vp.rel_err_estimate + vq.rel_err_estimate) * vp.volume);
    EXPECT_EQ(vp.q, 8);
    EXPECT_NEAR(vp.f_sp * vp.volume, std::pow(2.0, 8), 1e-9 * std::pow(2.0, 8));
}

TEST(BallVolume, ParallelEvaluationIsBitDeterministic) {
    std::mt19937_64 rng(99);
    const CorankTwoStructure s = popp_normalize(random_skew(4, rng), random_skew(4, rng));
    QuadratureSpec serial = fast_spec(), parallel = fast_spec();
    serial.jobs = 1;
    parallel.jobs = 4;
    const DensityReport a = ball_volume(s, serial);
    const DensityReport b = ball_volume(s, parallel);
    EXPECT_EQ(a.volume, b.volume);
    EXPECT_EQ(a.rel_err_estimate, b.rel_err_estimate);
    ASSERT_EQ(a.per_theta.size(), b.per_theta.size());
    for (std::size_t k = 0; k < a.per_theta.size(); ++k) {
        EXPECT_EQ(a.per_theta[k].value, b.per_theta[k].value);
    }
}

TEST(BallVolume, TargetUnmetRaises) {
    const CorankTwoStructure s = structure_i_ihat();
    QuadratureSpec spec = fast_spec();
    spec.theta_nodes = 4;
    spec.r_nodes = 4;
    spec.target_rel_err = 1e-9;
    spec.refine_cap = 0;
    EXPECT_THROW(ball_volume(s, spec), ErrTargetUnmet);
}

TEST(BallVolume, RejectsUnnormalizedStructures) {
    // Only normalized structures are accepted, which keeps the volume free
    // of the anisotropic-dilation scaling ambiguity.
    const CorankTwoStructure raw(SkewMatrix(2.0 * so4::quaternion_basis()[0]),
                                 SkewMatrix(3.0 * so4::skew_quaternion_basis()[0]), false);
    EXPECT_THROW(ball_volume(raw, fast_spec()), Error);
    EXPECT_THROW(hausdorff_dimension(raw), Error);
}

TEST(DensityField, ConstantFamilyGivesConstantField) {
    const StructureFamily f = builtin_commuting();
    std::vector<Vec> grid;
    for (int k = 0; k < 4; ++k) {
        Vec xi(1);
        xi << -0.3 + 0.2 * k;
        grid.push_back(xi);
    }
    const auto field = density_field(f, grid, fast_spec());
    ASSERT_EQ(field.size(), 4u);
    for (const auto& fp : field) ASSERT_TRUE(fp.ok) << fp.error;
    for (std::size_t k = 1; k < field.size(); ++k) {
        const double tol = (field[0].report.rel_err_estimate +
                            field[k].report.rel_err_estimate + 1e-9) *
                           field[0].report.volume;
        EXPECT_NEAR(field[k].report.volume, field[0].report.volume, tol);
    }
}

TEST(DensityField, FieldContinuousAcrossResonance) {
    // A segment crossing the resonance at xi = 0: the density field stays
    // continuous (no jump beyond 10x the error scale), as the C^1 statement
    // requires at field level.
    const StructureFamily f = builtin_generic();
    std::vector<Vec> grid;
    const int n = 9;
    for (int k = 0; k < n; ++k) {
        Vec xi(3);
        xi << -0.2 + 0.4 * k / (n - 1), 0.0, 0.0;
        grid.push_back(xi);
    }
    const auto field = density_field(f, grid, fast_spec());
    std::vector<double> vols;
    double err_scale = 0.0;
    for (const auto& fp : field) {
        ASSERT_TRUE(fp.ok) << fp.error;
        vols.push_back(fp.report.f_sp);
        err_scale = std::max(err_scale, fp.report.rel_err_estimate * fp.report.f_sp);
    }
    for (std::size_t k = 1; k < vols.size(); ++k) {
        EXPECT_LE(std::abs(vols[k] - vols[k - 1]), 10.0 * err_scale + 0.05 * vols[k]);
    }
}

TEST(DensityField, CacheHitIsBitIdentical) {
    const StructureFamily f = builtin_commuting();
    const auto dir = std::filesystem::temp_directory_path() / "nilgeo_cache_test";
    std::filesystem::remove_all(dir);

    std::vector<Vec> grid;
    Vec xi(1);
    xi << 0.25;
    grid.push_back(xi);

    const auto first = density_field(f, grid, fast_spec(), dir.string());
    ASSERT_TRUE(first[0].ok);
    EXPECT_FALSE(first[0].from_cache);

    const auto second = density_field(f, grid, fast_spec(), dir.string());
    ASSERT_TRUE(second[0].ok);
    EXPECT_TRUE(second[0].from_cache);
    EXPECT_EQ(first[0].report.volume, second[0].report.volume);
    EXPECT_EQ(first[0].report.f_sp, second[0].report.f_sp);
    ASSERT_EQ(first[0].report.per_theta.size(), second[0].report.per_theta.size());
    for (std::size_t k = 0; k < first[0].report.per_theta.size(); ++k) {
        EXPECT_EQ(first[0].report.per_theta[k].value, second[0].report.per_theta[k].value);
    }
    std::filesystem::remove_all(dir);
}

TEST(DensityField, PerPointErrorsRecorded) {
    // A family that is dependent at one grid point: the run continues and
    // the bad point carries its error message.
    StructureFamily f = builtin_commuting();
    // L2 = xi_1 * ihat: vanishes at xi = 0.
    f.l2_terms.clear();
    f.l2_terms.push_back(FamilyTerm{{1}, SkewMatrix(so4::skew_quaternion_basis()[0])});

    std::vector<Vec> grid;
    for (double v : {-0.5, 0.0, 0.5}) {
        Vec xi(1);
        xi << v;
        grid.push_back(xi);
    }
    const auto field = density_field(f, grid, fast_spec());
    EXPECT_TRUE(field[0].ok);
    EXPECT_FALSE(field[1].ok);
    EXPECT_NE(field[1].error.find("xi = (0)"), std::string::npos) << field[1].error;
    EXPECT_TRUE(field[2].ok);
}
