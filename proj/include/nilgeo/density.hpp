#pragma once

// Popp volume of the nilpotent unit ball and the spherical-Hausdorff
// density.  The volume is the triple integral of the exponential-map
// Jacobian determinant over theta in [0, 2pi), r in [0, A(theta)] and the
// unit covector ball, with A(theta) the cut radius.  Two independent ball
// backends (degree-exact product rule, Halton QMC) and node-doubling error
// estimates in all three layers.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nilgeo/geodesic.hpp"
#include "nilgeo/quadrature.hpp"
#include "nilgeo/thread.hpp"
#include "nilgeo/version.hpp"

namespace nilgeo {

enum class BallScheme { automatic, product, qmc };

struct QuadratureSpec {
    int theta_nodes = 64; // periodic trapezoid rule
    int r_nodes = 12;     // Gauss-Legendre nodes per theta
    BallScheme ball_scheme = BallScheme::automatic;
    int sphere_degree = 7;  // product backend: polynomial exactness degree
    int radial_nodes = 8;   // product backend: radial Gauss nodes
    int qmc_points = 16384; // qmc backend sample count
    double target_rel_err = 0.02;
    int refine_cap = 1;          // additional all-layer doubling rounds
    std::uint64_t seed = 20240809ull;
    int jobs = 1;

    void validate() const {
        if (theta_nodes < 4 || r_nodes < 4 || radial_nodes < 4) {
            throw ConfigError("QuadratureSpec: all node counts must be at least 4");
        }
        if (!(target_rel_err > 0.0) || target_rel_err > 0.1) {
            throw ConfigError("QuadratureSpec: target_rel_err must lie in (0, 0.1]");
        }
        if (qmc_points < 16) throw ConfigError("QuadratureSpec: qmc_points too small");
    }

    BallScheme resolved_scheme(int p) const {
        if (ball_scheme != BallScheme::automatic) return ball_scheme;
        return p <= 5 ? BallScheme::product : BallScheme::qmc;
    }
};

namespace detail {

inline const CubatureRule& cached_ball_rule(int p, BallScheme scheme, int degree,
                                            int radial, int qmc_n, std::uint64_t seed) {
    static std::mutex mutex;
    static std::map<std::string, CubatureRule> cache;
    std::ostringstream key;
    key << p << '|' << static_cast<int>(scheme) << '|' << degree << '|' << radial << '|'
        << qmc_n << '|' << seed;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key.str());
    if (it == cache.end()) {
        CubatureRule rule = (scheme == BallScheme::product)
                                ? ball_product_rule(p, degree, radial)
                                : halton_ball(p, qmc_n, seed);
        it = cache.emplace(key.str(), std::move(rule)).first;
    }
    return it->second;
}

struct FiberValue {
    double value = 0.0;
    bool sign_mixed = false;
};

inline FiberValue fiber_integral(const ExpMapData& data, const CubatureRule& rule) {
    std::vector<double> terms(static_cast<std::size_t>(rule.points.cols()));
    double jmin = 0.0, jmax = 0.0;
    for (Eigen::Index k = 0; k < rule.points.cols(); ++k) {
        const double j = data.jacobian_det(rule.points.col(k));
        jmin = std::min(jmin, j);
        jmax = std::max(jmax, j);
        terms[static_cast<std::size_t>(k)] = rule.weights(k) * j;
    }
    FiberValue out;
    out.value = kahan_sum(terms);
    const double scale = std::max(std::abs(jmin), std::abs(jmax));
    out.sign_mixed = (jmin < -1e-9 * scale) && (jmax > 1e-9 * scale);
    return out;
}

} // namespace detail

// f(theta, r): integral of the Jacobian determinant over the unit covector
// ball, by the spec'd ball scheme.
inline double fiber_density(const CorankTwoStructure& s, double theta, double r,
                            const QuadratureSpec& spec = QuadratureSpec{}) {
    spec.validate();
    const BallScheme scheme = spec.resolved_scheme(s.p());
    const CubatureRule& rule = detail::cached_ball_rule(
        s.p(), scheme, spec.sphere_degree, spec.radial_nodes, spec.qmc_points, spec.seed);
    return detail::fiber_integral(exp_map_data(s, theta, r), rule).value;
}

struct SliceResult {
    double theta = 0.0;
    double cut_radius = 0.0; // A(theta)
    double value = 0.0;      // W(theta)
    double err_estimate = 0.0;
    bool sign_mixed = false;
};

// W(theta) = int_0^A(theta) f(theta, r) dr by Gauss-Legendre, with a
// node-doubling error estimate.
inline SliceResult angular_slice(const CorankTwoStructure& s, double theta,
                                 const QuadratureSpec& spec = QuadratureSpec{}) {
    spec.validate();
    const double a = cut_time(s, theta, 1.0);
    const detail::PencilBlocks blocks = detail::pencil_blocks(s, theta);
    const BallScheme scheme = spec.resolved_scheme(s.p());
    const CubatureRule& rule = detail::cached_ball_rule(
        s.p(), scheme, spec.sphere_degree, spec.radial_nodes, spec.qmc_points, spec.seed);

    SliceResult out;
    out.theta = theta;
    out.cut_radius = a;
    double coarse = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
        const int n = (pass == 0) ? spec.r_nodes : 2 * spec.r_nodes;
        const Rule1D gl = gauss_legendre_on(n, 0.0, a);
        std::vector<double> terms(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            const detail::FiberValue f =
                detail::fiber_integral(exp_map_data(s, theta, gl.nodes(k), &blocks), rule);
            terms[static_cast<std::size_t>(k)] = gl.weights(k) * f.value;
            out.sign_mixed = out.sign_mixed || f.sign_mixed;
        }
        const double v = kahan_sum(terms);
        if (pass == 0) {
            coarse = v;
        } else {
            out.value = v;
            out.err_estimate = std::abs(v - coarse);
        }
    }
    return out;
}

struct DensityReport {
    double volume = 0.0;
    double rel_err_estimate = 0.0;
    int q = 0;         // Hausdorff dimension
    double f_sp = 0.0; // 2^Q / volume
    double min_gap_over_theta = 0.0;
    int sign_mixed_slices = 0;
    std::vector<SliceResult> per_theta;
};

// Popp volume of the nilpotent unit ball with layered error estimates.
// Refines all three layers until target_rel_err is met or the refinement
// cap is exhausted (then throws ErrTargetUnmet).
inline DensityReport ball_volume(const CorankTwoStructure& s, QuadratureSpec spec = QuadratureSpec{}) {
    spec.validate();
    if (!s.normalized()) throw Error("ball_volume: structure must be normalized");
    const int p = s.p();
    const BallScheme scheme = spec.resolved_scheme(p);

    for (int round = 0;; ++round) {
        const int n_fine = 2 * spec.theta_nodes;
        const CubatureRule& ball_base = detail::cached_ball_rule(
            p, scheme, spec.sphere_degree, spec.radial_nodes, spec.qmc_points, spec.seed);
        const CubatureRule& ball_fine = detail::cached_ball_rule(
            p, scheme, spec.sphere_degree + 2, spec.radial_nodes + 4, 2 * spec.qmc_points,
            spec.seed);

        struct ThetaData {
            double a = 0.0;
            double w_base = 0.0, w_r2 = 0.0, w_ball2 = 0.0, w_best = 0.0;
            double gap = 0.0;
            bool sign_mixed = false;
        };
        std::vector<ThetaData> slices(static_cast<std::size_t>(n_fine));

        parallel_for(n_fine, spec.jobs, [&](int k) {
            const double theta = 2.0 * M_PI * k / n_fine;
            const detail::PencilBlocks blocks = detail::pencil_blocks(s, theta);
            ThetaData& td = slices[static_cast<std::size_t>(k)];
            td.a = cut_time(s, theta, 1.0);
            const SpectralData sd = eigen_moduli(pencil(s, theta, 1.0).matrix);
            td.gap = sd.moduli.size() >= 2 ? sd.moduli[0] - sd.moduli[1]
                                           : std::numeric_limits<double>::infinity();

            const Rule1D gl1 = gauss_legendre_on(spec.r_nodes, 0.0, td.a);
            const Rule1D gl2 = gauss_legendre_on(2 * spec.r_nodes, 0.0, td.a);
            std::vector<double> t_b, t_r2, t_ball2, t_best;
            for (int i = 0; i < gl1.nodes.size(); ++i) {
                const ExpMapData data = exp_map_data(s, theta, gl1.nodes(i), &blocks);
                const detail::FiberValue fb = detail::fiber_integral(data, ball_base);
                const detail::FiberValue ff = detail::fiber_integral(data, ball_fine);
                td.sign_mixed = td.sign_mixed || fb.sign_mixed;
                t_b.push_back(gl1.weights(i) * fb.value);
                t_ball2.push_back(gl1.weights(i) * ff.value);
            }
            for (int i = 0; i < gl2.nodes.size(); ++i) {
                const ExpMapData data = exp_map_data(s, theta, gl2.nodes(i), &blocks);
                const detail::FiberValue fb = detail::fiber_integral(data, ball_base);
                const detail::FiberValue ff = detail::fiber_integral(data, ball_fine);
                t_r2.push_back(gl2.weights(i) * fb.value);
                t_best.push_back(gl2.weights(i) * ff.value);
            }
            td.w_base = kahan_sum(t_b);
            td.w_r2 = kahan_sum(t_r2);
            td.w_ball2 = kahan_sum(t_ball2);
            td.w_best = kahan_sum(t_best);
        });

        const double h_fine = 2.0 * M_PI / n_fine;
        std::vector<double> v_base_terms, v_th2_terms, v_r2_terms, v_ball2_terms, v_best_terms;
        for (int k = 0; k < n_fine; ++k) {
            const ThetaData& td = slices[static_cast<std::size_t>(k)];
            if (k % 2 == 0) {
                v_base_terms.push_back(2.0 * h_fine * td.w_base);
                v_r2_terms.push_back(2.0 * h_fine * td.w_r2);
                v_ball2_terms.push_back(2.0 * h_fine * td.w_ball2);
            }
            v_th2_terms.push_back(h_fine * td.w_r2);
            v_best_terms.push_back(h_fine * td.w_best);
        }
        const double v_base = kahan_sum(v_base_terms);
        const double v_th2 = kahan_sum(v_th2_terms);
        const double v_r2 = kahan_sum(v_r2_terms);
        const double v_ball2 = kahan_sum(v_ball2_terms);
        const double v_best = kahan_sum(v_best_terms);

        const double err_abs = std::abs(v_th2 - v_r2) + std::abs(v_r2 - v_base) +
                               std::abs(v_ball2 - v_base);

        DensityReport rep;
        rep.volume = v_best;
        rep.rel_err_estimate = err_abs / std::max(std::abs(v_best), 1e-300);
        rep.q = hausdorff_dimension(s);
        rep.f_sp = std::pow(2.0, rep.q) / rep.volume;
        rep.min_gap_over_theta = std::numeric_limits<double>::infinity();
        for (int k = 0; k < n_fine; ++k) {
            const ThetaData& td = slices[static_cast<std::size_t>(k)];
            SliceResult sr;
            sr.theta = 2.0 * M_PI * k / n_fine;
            sr.cut_radius = td.a;
            sr.value = td.w_best;
            sr.err_estimate = std::abs(td.w_best - td.w_base);
            sr.sign_mixed = td.sign_mixed;
            rep.per_theta.push_back(sr);
            rep.min_gap_over_theta = std::min(rep.min_gap_over_theta, td.gap);
            if (td.sign_mixed) ++rep.sign_mixed_slices;
        }
        if (!(rep.volume > 0.0) || !std::isfinite(rep.volume)) {
            throw Error("ball_volume: volume must be positive and finite");
        }
        if (rep.rel_err_estimate <= spec.target_rel_err) return rep;
        if (round >= spec.refine_cap) {
            throw ErrTargetUnmet("ball_volume: error estimate " +
                                 std::to_string(rep.rel_err_estimate) + " exceeds target " +
                                 std::to_string(spec.target_rel_err) + " after refinement cap");
        }
        spec.theta_nodes *= 2;
        spec.r_nodes *= 2;
        spec.sphere_degree += 2;
        spec.radial_nodes += 4;
        spec.qmc_points *= 2;
    }
}

// ---------------------------------------------------------------------------
// Density over a parameter grid, resumable through a content-addressed cache.

struct FieldPoint {
    Vec xi;
    bool ok = false;
    std::string error;
    DensityReport report;
    bool from_cache = false;
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string spec_signature(const QuadratureSpec& q, int p) {
    std::ostringstream out;
    out << p << '|' << q.theta_nodes << '|' << q.r_nodes << '|'
        << static_cast<int>(q.resolved_scheme(p)) << '|' << q.sphere_degree << '|'
        << q.radial_nodes << '|' << q.qmc_points << '|' << q.target_rel_err << '|'
        << q.refine_cap << '|' << q.seed;
    return out.str();
}

inline std::string serialize_report(const DensityReport& r) {
    std::ostringstream out;
    out << "report " << kReportFormat << "\n";
    out << "volume " << format_double(r.volume) << "\n";
    out << "rel_err " << format_double(r.rel_err_estimate) << "\n";
    out << "q " << r.q << "\n";
    out << "f_sp " << format_double(r.f_sp) << "\n";
    out << "min_gap " << format_double(r.min_gap_over_theta) << "\n";
    out << "sign_mixed_slices " << r.sign_mixed_slices << "\n";
    out << "slices " << r.per_theta.size() << "\n";
    for (const auto& sr : r.per_theta) {
        out << "slice " << format_double(sr.theta) << " " << format_double(sr.cut_radius) << " "
            << format_double(sr.value) << " " << format_double(sr.err_estimate) << " "
            << (sr.sign_mixed ? 1 : 0) << "\n";
    }
    return out.str();
}

inline std::optional<DensityReport> parse_report(const std::string& text) {
    std::istringstream in(text);
    std::string tag;
    DensityReport r;
    std::size_t slices = 0;
    if (!(in >> tag) || tag != "report") return std::nullopt;
    std::string fmt;
    if (!(in >> fmt) || fmt != kReportFormat) return std::nullopt;
    auto need = [&](const char* name, auto& value) {
        std::string key;
        if (!(in >> key >> value) || key != name) throw ParseError("cache: bad field");
    };
    try {
        need("volume", r.volume);
        need("rel_err", r.rel_err_estimate);
        need("q", r.q);
        need("f_sp", r.f_sp);
        need("min_gap", r.min_gap_over_theta);
        need("sign_mixed_slices", r.sign_mixed_slices);
        need("slices", slices);
        for (std::size_t i = 0; i < slices; ++i) {
            std::string key;
            SliceResult sr;
            int mixed = 0;
            if (!(in >> key >> sr.theta >> sr.cut_radius >> sr.value >> sr.err_estimate >>
                  mixed) ||
                key != "slice") {
                return std::nullopt;
            }
            sr.sign_mixed = mixed != 0;
            r.per_theta.push_back(sr);
        }
    } catch (...) {
        return std::nullopt;
    }
    return r;
}

} // namespace detail

// Per-point density reports over a grid of parameters.  Points found in the
// cache directory (when given) are loaded instead of recomputed; results are
// written back keyed by a content hash of (family, point, spec).
inline std::vector<FieldPoint> density_field(const StructureFamily& f, const std::vector<Vec>& grid,
                                             const QuadratureSpec& spec = QuadratureSpec{},
                                             const std::string& cache_dir = "") {
    spec.validate();
    std::vector<FieldPoint> out(grid.size());

    auto cache_path = [&](const Vec& xi) -> std::filesystem::path {
        std::ostringstream key;
        key << save_family_string(f) << "\n@";
        for (int i = 0; i < xi.size(); ++i) key << format_double(xi(i)) << ',';
        key << "\n#" << detail::spec_signature(spec, f.p) << "\n!" << kVersion;
        std::ostringstream name;
        name << std::hex << detail::fnv1a64(key.str()) << ".density";
        return std::filesystem::path(cache_dir) / name.str();
    };

    parallel_for(static_cast<int>(grid.size()), spec.jobs, [&](int i) {
        FieldPoint& fp = out[static_cast<std::size_t>(i)];
        fp.xi = grid[static_cast<std::size_t>(i)];
        try {
            if (!cache_dir.empty()) {
                const auto path = cache_path(fp.xi);
                if (std::filesystem::exists(path)) {
                    std::ifstream in(path, std::ios::binary);
                    std::ostringstream buf;
                    buf << in.rdbuf();
                    if (auto rep = detail::parse_report(buf.str())) {
                        fp.report = *rep;
                        fp.ok = true;
                        fp.from_cache = true;
                        return;
                    }
                }
            }
            QuadratureSpec inner = spec;
            inner.jobs = grid.size() > 1 ? 1 : spec.jobs; // one level of parallelism
            fp.report = ball_volume(eval_family(f, fp.xi), inner);
            fp.ok = true;
            if (!cache_dir.empty()) {
                std::filesystem::create_directories(cache_dir);
                std::ofstream outfile(cache_path(fp.xi), std::ios::binary);
                outfile << detail::serialize_report(fp.report);
            }
        } catch (const Error& e) {
            fp.ok = false;
            fp.error = e.what();
        }
    });
    return out;
}

} // namespace nilgeo
