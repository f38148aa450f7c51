#pragma once

// Quadrature toolbox: Gauss rules from Golub-Welsch, Chebyshev-Lobatto
// collocation with spectral running antiderivatives, an adaptive
// Gauss-Kronrod integrator, degree-exact sphere/ball product rules and a
// Halton low-discrepancy ball sampler.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <vector>

#include <Eigen/Dense>

#include "nilgeo/errors.hpp"

namespace nilgeo {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Rule1D {
    Vec nodes;
    Vec weights;
};

// Gauss rule for the Jacobi weight (1-x)^alpha (1+x)^beta on [-1, 1],
// computed from the symmetric tridiagonal recurrence (Golub-Welsch).
inline Rule1D gauss_jacobi(int n, double alpha, double beta) {
    if (n < 1) throw Error("gauss_jacobi: need at least one node");
    const double ab = alpha + beta;
    Vec diag(n), sub(std::max(0, n - 1));
    for (int k = 0; k < n; ++k) {
        if (k == 0) {
            diag(0) = (beta - alpha) / (ab + 2.0);
        } else {
            const double d = 2.0 * k + ab;
            diag(k) = (beta * beta - alpha * alpha) / (d * (d + 2.0));
        }
    }
    for (int k = 1; k < n; ++k) {
        const double d = 2.0 * k + ab;
        double b2;
        if (k == 1) {
            b2 = 4.0 * (1.0 + alpha) * (1.0 + beta) / ((ab + 2.0) * (ab + 2.0) * (ab + 3.0));
        } else {
            b2 = 4.0 * k * (k + alpha) * (k + beta) * (k + ab) /
                 (d * d * (d + 1.0) * (d - 1.0));
        }
        sub(k - 1) = std::sqrt(b2);
    }
    Eigen::SelfAdjointEigenSolver<Mat> es;
    Mat jm = Mat::Zero(n, n);
    for (int k = 0; k < n; ++k) jm(k, k) = diag(k);
    for (int k = 0; k + 1 < n; ++k) {
        jm(k, k + 1) = sub(k);
        jm(k + 1, k) = sub(k);
    }
    es.compute(jm);
    const double mu0 = std::pow(2.0, ab + 1.0) *
                       std::exp(std::lgamma(alpha + 1.0) + std::lgamma(beta + 1.0) -
                                std::lgamma(ab + 2.0));
    Rule1D rule;
    rule.nodes = es.eigenvalues();
    rule.weights.resize(n);
    for (int k = 0; k < n; ++k) {
        const double v = es.eigenvectors()(0, k);
        rule.weights(k) = mu0 * v * v;
    }
    return rule;
}

inline Rule1D gauss_legendre(int n) { return gauss_jacobi(n, 0.0, 0.0); }

// Gauss-Legendre transplanted to [a, b].
inline Rule1D gauss_legendre_on(int n, double a, double b) {
    Rule1D r = gauss_legendre(n);
    for (int k = 0; k < n; ++k) {
        r.nodes(k) = 0.5 * (a + b) + 0.5 * (b - a) * r.nodes(k);
        r.weights(k) *= 0.5 * (b - a);
    }
    return r;
}

// Nodes rho_k and weights for int_0^1 h(rho) rho^(p-1) drho, exact through
// polynomial degree 2n-1.
inline Rule1D radial_rule(int n, int p) {
    Rule1D r = gauss_jacobi(n, 0.0, static_cast<double>(p - 1));
    Rule1D out;
    out.nodes.resize(n);
    out.weights.resize(n);
    const double scale = std::pow(0.5, p); // ((1+t)/2)^(p-1) * dt/2
    for (int k = 0; k < n; ++k) {
        out.nodes(k) = 0.5 * (1.0 + r.nodes(k));
        out.weights(k) = scale * r.weights(k);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chebyshev-Lobatto collocation on [0, 1] with exact running antiderivatives
// of the degree-N interpolant.  Used to evaluate all time integrals of the
// geodesic variational system to spectral accuracy.

class ChebIntegration {
public:
    explicit ChebIntegration(int n) : n_(n) {
        // Node k: x = cos(k pi / n) descending, s = (1 - x)/2 ascending in s.
        nodes_.resize(n + 1);
        Mat vander(n + 1, n + 1);
        for (int k = 0; k <= n; ++k) {
            const double x = std::cos(M_PI * k / n);
            nodes_(k) = 0.5 * (1.0 - x);
            for (int m = 0; m <= n; ++m) vander(k, m) = std::cos(m * std::acos(std::clamp(x, -1.0, 1.0)));
        }
        const Mat coeff = vander.inverse(); // values -> Chebyshev coefficients

        // Antiderivative in coefficient space (with respect to x).
        Mat anti = Mat::Zero(n + 2, n + 1);
        for (int m = 1; m <= n + 1; ++m) {
            if (m - 1 <= n) anti(m, m - 1) += 1.0 / (2.0 * m);
            if (m + 1 <= n) anti(m, m + 1) -= 1.0 / (2.0 * m);
        }
        // T_1 integrates to T_2/4 + const and also carries a T_0-free part:
        // int T_0 = T_1, int T_1 = T_2/4, handled by the recurrence except
        // the m = 1 special case.
        anti(1, 0) = 1.0;
        anti(2, 1) = 0.25;
        if (n >= 2) anti(1, 2) = -0.5; // from the m = 1 row of the recurrence

        Mat vander_f(n + 1, n + 2);
        Vec at_one(n + 2);
        for (int k = 0; k <= n; ++k) {
            const double x = std::cos(M_PI * k / n);
            const double phi = std::acos(std::clamp(x, -1.0, 1.0));
            for (int m = 0; m <= n + 1; ++m) vander_f(k, m) = std::cos(m * phi);
        }
        for (int m = 0; m <= n + 1; ++m) at_one(m) = 1.0; // T_m(1) = 1

        // Running integral from s = 0 (x = 1):  (F(1) - F(x_k)) / 2.
        const Mat fvals = vander_f * anti * coeff;          // F(x_k) from values
        const Eigen::RowVectorXd f_at_one = at_one.transpose() * anti * coeff;
        qmat_ = 0.5 * (Vec::Ones(n + 1) * f_at_one - fvals);
    }

    int n() const { return n_; }
    const Vec& nodes() const { return nodes_; }

    // Running antiderivative values at all nodes from sample values.
    Vec integrate_running(const Vec& values) const { return qmat_ * values; }

    // Same, applied column-wise to a (n+1) x m value table.
    Mat integrate_running(const Mat& values) const { return qmat_ * values; }

    // Definite integral over [0, 1].
    double integrate(const Vec& values) const { return (qmat_ * values)(n_); }

    const Mat& matrix() const { return qmat_; }

private:
    int n_;
    Vec nodes_;
    Mat qmat_;
};

// Shared, lazily built integration operators keyed by node count.
inline const ChebIntegration& cheb_integration(int n) {
    static std::mutex mutex;
    static std::map<int, ChebIntegration> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, ChebIntegration(n)).first;
    return it->second;
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod (7, 15).

namespace detail {

inline const std::array<double, 8>& gk15_nodes() {
    static const std::array<double, 8> x = {
        0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
        0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
        0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
    return x;
}

inline const std::array<double, 8>& gk15_weights() {
    static const std::array<double, 8> w = {
        0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
        0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
    return w;
}

inline const std::array<double, 4>& gauss7_weights() {
    static const std::array<double, 4> w = {
        0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
        0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
    return w;
}

template <typename F>
inline void gk15_panel(const F& f, double a, double b, double& kronrod, double& err) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const auto& xs = gk15_nodes();
    const auto& wk = gk15_weights();
    const auto& wg = gauss7_weights();
    double resk = wk[7] * f(c);
    double resg = wg[3] * f(c);
    for (int i = 0; i < 7; ++i) {
        const double fa = f(c - h * xs[i]);
        const double fb = f(c + h * xs[i]);
        resk += wk[i] * (fa + fb);
        if (i % 2 == 1) resg += wg[i / 2] * (fa + fb);
    }
    kronrod = resk * h;
    err = std::abs((resk - resg) * h);
}

} // namespace detail

// Adaptive bisection until the summed Kronrod error estimate meets abs_tol.
template <typename F>
inline double adaptive_gauss_kronrod(const F& f, double a, double b, double abs_tol,
                                     int max_panels = 2000) {
    if (a == b) return 0.0;
    struct Panel {
        double a, b, value, err;
    };
    std::vector<Panel> panels;
    double v, e;
    detail::gk15_panel(f, a, b, v, e);
    panels.push_back({a, b, v, e});

    while (static_cast<int>(panels.size()) < max_panels) {
        double total_err = 0.0;
        std::size_t worst = 0;
        for (std::size_t i = 0; i < panels.size(); ++i) {
            total_err += panels[i].err;
            if (panels[i].err > panels[worst].err) worst = i;
        }
        if (total_err <= abs_tol) break;
        const Panel p = panels[worst];
        const double m = 0.5 * (p.a + p.b);
        Panel left{p.a, m, 0, 0}, right{m, p.b, 0, 0};
        detail::gk15_panel(f, left.a, left.b, left.value, left.err);
        detail::gk15_panel(f, right.a, right.b, right.value, right.err);
        panels[worst] = left;
        panels.push_back(right);
    }
    // Fixed-order compensated accumulation: sort by interval start.
    std::sort(panels.begin(), panels.end(), [](const Panel& x, const Panel& y) { return x.a < y.a; });
    double sum = 0.0, comp = 0.0;
    for (const auto& p : panels) {
        const double y = p.value - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Sphere and ball rules.

struct CubatureRule {
    Mat points;  // one point per column
    Vec weights; // sums to the measure of the domain
};

inline double unit_ball_volume(int p) {
    return std::pow(M_PI, 0.5 * p) / std::exp(std::lgamma(0.5 * p + 1.0));
}

inline double unit_sphere_area(int p) { return p * unit_ball_volume(p); }

// Spherical-product Gauss rule on S^{p-1}, exact for all polynomials of
// degree <= degree.  Angles carry Gauss-Gegenbauer nodes, the final angle a
// uniform rule.
inline CubatureRule sphere_rule(int p, int degree) {
    if (p < 2) throw Error("sphere_rule: dimension must be at least 2");
    const int m = (degree + 2) / 2;      // Gauss points per polar angle
    const int n_last = degree + 1;       // uniform points on the final circle

    std::vector<Rule1D> polar; // in t = cos(phi_k)
    for (int k = 1; k <= p - 2; ++k) {
        const double expo = static_cast<double>(p - 1 - k); // sin^expo weight
        polar.push_back(gauss_jacobi(m, 0.5 * (expo - 1.0), 0.5 * (expo - 1.0)));
    }

    std::size_t count = n_last;
    for (std::size_t k = 0; k < polar.size(); ++k) count *= m;

    CubatureRule rule;
    rule.points.resize(p, static_cast<Eigen::Index>(count));
    rule.weights.resize(static_cast<Eigen::Index>(count));

    std::vector<int> idx(polar.size(), 0);
    Eigen::Index out = 0;
    for (int last = 0; last < n_last; ++last) {
        const double psi = 2.0 * M_PI * (last + 0.5) / n_last;
        // iterate over all combinations of polar indices
        std::fill(idx.begin(), idx.end(), 0);
        while (true) {
            double w = 2.0 * M_PI / n_last;
            double sin_prod = 1.0;
            Vec x(p);
            for (std::size_t k = 0; k < polar.size(); ++k) {
                const double t = polar[k].nodes(idx[k]);
                w *= polar[k].weights(idx[k]);
                x(static_cast<int>(k)) = sin_prod * t;
                sin_prod *= std::sqrt(std::max(0.0, 1.0 - t * t));
            }
            x(p - 2) = sin_prod * std::cos(psi);
            x(p - 1) = sin_prod * std::sin(psi);
            rule.points.col(out) = x;
            rule.weights(out) = w;
            ++out;

            std::size_t k = 0;
            for (; k < idx.size(); ++k) {
                if (++idx[k] < m) break;
                idx[k] = 0;
            }
            if (k == idx.size()) break;
        }
    }
    rule.points.conservativeResize(p, out);
    rule.weights.conservativeResize(out);
    return rule;
}

// Product rule over the unit ball: sphere rule x radial Gauss with weight
// rho^(p-1).  Exact for integrands polynomial of degree <= sphere degree.
inline CubatureRule ball_product_rule(int p, int sphere_degree = 7, int radial_nodes = 8) {
    const CubatureRule sphere = sphere_rule(p, sphere_degree);
    const Rule1D radial = radial_rule(radial_nodes, p);
    CubatureRule rule;
    const Eigen::Index count = sphere.points.cols() * radial.nodes.size();
    rule.points.resize(p, count);
    rule.weights.resize(count);
    Eigen::Index out = 0;
    for (Eigen::Index s = 0; s < sphere.points.cols(); ++s) {
        for (Eigen::Index r = 0; r < radial.nodes.size(); ++r) {
            rule.points.col(out) = radial.nodes(r) * sphere.points.col(s);
            rule.weights(out) = radial.weights(r) * sphere.weights(s);
            ++out;
        }
    }
    return rule;
}

// ---------------------------------------------------------------------------
// Halton low-discrepancy sampling of the unit ball (equal weights).

namespace detail {

inline double radical_inverse(std::uint64_t index, int base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

inline const std::array<int, 9>& halton_bases() {
    static const std::array<int, 9> b = {2, 3, 5, 7, 11, 13, 17, 19, 23};
    return b;
}

} // namespace detail

// n points equidistributed in the unit ball of R^p; weights sum to the ball
// volume.  A seed applies a deterministic Cranley-Patterson rotation.
inline CubatureRule halton_ball(int p, int n, std::uint64_t seed = 0) {
    if (p > 8) throw Error("halton_ball: dimension capped at 8");
    const int gauss_dims = p + (p % 2); // Box-Muller consumes pairs
    CubatureRule rule;
    rule.points.resize(p, n);
    rule.weights = Vec::Constant(n, unit_ball_volume(p) / n);

    std::vector<double> shift(gauss_dims + 1, 0.0);
    std::uint64_t state = seed * 6364136223846793005ull + 1442695040888963407ull;
    for (auto& sh : shift) {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        sh = static_cast<double>(state >> 11) * (1.0 / 9007199254740992.0);
    }

    const std::uint64_t burn = 64;
    for (int i = 0; i < n; ++i) {
        const std::uint64_t index = burn + static_cast<std::uint64_t>(i);
        Vec g(gauss_dims);
        for (int d = 0; d < gauss_dims; d += 2) {
            double u1 = detail::radical_inverse(index, detail::halton_bases()[d]) + shift[d];
            double u2 = detail::radical_inverse(index, detail::halton_bases()[d + 1]) + shift[d + 1];
            u1 -= std::floor(u1);
            u2 -= std::floor(u2);
            u1 = std::max(u1, 1e-16);
            const double rad = std::sqrt(-2.0 * std::log(u1));
            g(d) = rad * std::cos(2.0 * M_PI * u2);
            if (d + 1 < gauss_dims) g(d + 1) = rad * std::sin(2.0 * M_PI * u2);
        }
        Vec dir = g.head(p);
        const double norm = dir.norm();
        if (norm < 1e-14) {
            dir = Vec::Unit(p, 0);
        } else {
            dir /= norm;
        }
        double u = detail::radical_inverse(index, detail::halton_bases()[gauss_dims]) +
                   shift[gauss_dims];
        u -= std::floor(u);
        const double rho = std::pow(std::max(u, 1e-16), 1.0 / p);
        rule.points.col(i) = rho * dir;
    }
    return rule;
}

// Fixed-order compensated (Kahan) summation.
inline double kahan_sum(const std::vector<double>& values) {
    double sum = 0.0, comp = 0.0;
    for (double v : values) {
        const double y = v - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

} // namespace nilgeo
