#pragma once

// Arclength geodesics of the nilpotent approximation, the time-1 exponential
// map E(px0, r, theta), its Jacobian determinant and cut times.
//
// With B = r (cos(theta) L1 + sin(theta) L2) the reduced dynamics is
//
//     u' = -B u,   x' = u,   y_j' = (1/2) x' L_j u,
//
// so u and x flow in closed form through the 2x2-block normal form of the
// pencil, y is a quadratic form of the initial covector, and the cut time of
// an arclength geodesic is 2 pi over the top eigenvalue modulus of B.
//
// Everything the Jacobian needs reduces to nine p x p matrices per (theta, r):
//
//     x(1) = K px0,            y_j(1) = px0' S_j px0,
//     K    = int_0^1 U(s) ds,  S_j = (1/2) int_0^1 K(s)' L_j U(s) ds,
//
// plus their r- and theta-derivatives from the variational identities
// dU/dr = -s P U and dU/dtheta = -r U(s) int_0^s U'(t) Ptheta U(t) dt.  All
// running time integrals are spectral Chebyshev antiderivatives of the
// closed-form flow.

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "nilgeo/quadrature.hpp"
#include "nilgeo/structure.hpp"

namespace nilgeo {

using Vec2 = Eigen::Vector2d;

struct Covector {
    Vec px0;          // initial horizontal covector
    double theta = 0; // angle of the vertical covector
    double r = 0;     // radius of the vertical covector
};

struct GeodesicState {
    double t = 0;
    Vec x;
    Vec2 y;
    Vec u;   // control; |u| is conserved
    Vec2 py; // constant along the flow
};

namespace detail {

// sin(phi)/phi and (1 - cos(phi))/phi with series switch for small phases.
inline double sinc_phi(double phi) {
    if (std::abs(phi) < 1e-4) {
        const double p2 = phi * phi;
        return 1.0 - p2 / 6.0 + p2 * p2 / 120.0;
    }
    return std::sin(phi) / phi;
}

inline double versine_phi(double phi) {
    if (std::abs(phi) < 1e-4) {
        const double p2 = phi * phi;
        return phi * (0.5 - p2 / 24.0 + p2 * p2 / 720.0);
    }
    return (1.0 - std::cos(phi)) / phi;
}

// Block frame of the unit pencil direction P(theta); reusable across r.
struct PencilBlocks {
    Mat g;                     // orthogonal frame, G' P G = Bd(w_i J, [0])
    std::vector<double> omega; // pair frequencies, nonincreasing
    int p = 0;

    // exp(-t r P) = G Bd(rot2(-t r w_i)) G'
    Mat flow(double t, double r) const {
        Mat d = Mat::Identity(p, p);
        for (std::size_t i = 0; i < omega.size(); ++i) {
            const double phi = t * r * omega[i];
            const double c = std::cos(phi), s = std::sin(phi);
            d(2 * i, 2 * i) = c;
            d(2 * i, 2 * i + 1) = s;
            d(2 * i + 1, 2 * i) = -s;
            d(2 * i + 1, 2 * i + 1) = c;
        }
        return g * d * g.transpose();
    }

    // int_0^t exp(-s r P) ds
    Mat flow_integral(double t, double r) const {
        Mat d = Mat::Identity(p, p) * t;
        for (std::size_t i = 0; i < omega.size(); ++i) {
            const double phi = t * r * omega[i];
            const double a = t * sinc_phi(phi);
            const double b = t * versine_phi(phi);
            d(2 * i, 2 * i) = a;
            d(2 * i, 2 * i + 1) = b;
            d(2 * i + 1, 2 * i) = -b;
            d(2 * i + 1, 2 * i + 1) = a;
        }
        return g * d * g.transpose();
    }
};

inline PencilBlocks pencil_blocks(const CorankTwoStructure& s, double theta) {
    const SpectralData sd = eigen_moduli(pencil(s, theta, 1.0).matrix);
    PencilBlocks b;
    b.g = sd.block_frame;
    b.omega = sd.moduli;
    b.p = s.p();
    return b;
}

} // namespace detail

// Closed-form geodesic state at time t; y by adaptive quadrature.
inline GeodesicState geodesic(const CorankTwoStructure& s, const Covector& c, double t,
                              double y_abs_tol = 1e-11) {
    if (!s.normalized()) throw Error("geodesic: structure must be normalized");
    const int p = s.p();
    if (c.px0.size() != p) throw DimensionError("geodesic: px0 has wrong dimension");

    const detail::PencilBlocks blocks = detail::pencil_blocks(s, c.theta);
    GeodesicState out;
    out.t = t;
    out.py = Vec2(c.r * std::cos(c.theta), c.r * std::sin(c.theta));
    out.u = blocks.flow(t, c.r) * c.px0;
    out.x = blocks.flow_integral(t, c.r) * c.px0;

    const Mat& l1 = s.L1().entries();
    const Mat& l2 = s.L2().entries();
    for (int j = 0; j < 2; ++j) {
        const Mat& lj = (j == 0) ? l1 : l2;
        out.y(j) = adaptive_gauss_kronrod(
            [&](double tau) {
                const Vec xs = blocks.flow_integral(tau, c.r) * c.px0;
                const Vec us = blocks.flow(tau, c.r) * c.px0;
                return 0.5 * xs.dot(lj * us);
            },
            0.0, t, y_abs_tol);
    }
    return out;
}

// t_cut = 2 pi / max eigenvalue modulus of the pencil.
inline double cut_time(const CorankTwoStructure& s, double theta, double r) {
    if (r <= 0) throw Error("cut_time: r must be positive");
    const double m = max_modulus(pencil(s, theta, r).matrix);
    if (!(m > 0)) throw Error("cut_time: pencil matrix vanished; structure is degenerate");
    return 2.0 * M_PI / m;
}

// The cut point is conjugate iff the top eigenvalue is multiple or the pair
// commutes.
inline bool cut_is_conjugate(const CorankTwoStructure& s, double theta, double r, double tol) {
    const SkewMatrix b = pencil(s, theta, r).matrix;
    if (multiplicity_at_top(b, tol) >= 2) return true;
    const Mat comm = s.L1().entries() * s.L2().entries() - s.L2().entries() * s.L1().entries();
    return comm.norm() <= tol;
}

// Time-1 exponential map, (px0, r, theta) -> (x, y) in R^(p+2).
inline Vec exp_map(const CorankTwoStructure& s, const Covector& c) {
    const GeodesicState g = geodesic(s, c, 1.0);
    Vec out(s.p() + 2);
    out.head(s.p()) = g.x;
    out(s.p()) = g.y(0);
    out(s.p() + 1) = g.y(1);
    return out;
}

// ---------------------------------------------------------------------------
// Exponential-map derivative data at fixed (theta, r).

struct ExpMapData {
    int p = 0;
    double theta = 0, r = 0;
    Mat K, Kr, Kth;      // x(1) = K px0 and its r/theta derivatives
    Mat S1, S2;          // y_j(1) = px0' S_j px0
    Mat S1r, S2r, S1th, S2th;

    Vec map(const Vec& px0) const {
        Vec out(p + 2);
        out.head(p) = K * px0;
        out(p) = px0.dot(S1 * px0);
        out(p + 1) = px0.dot(S2 * px0);
        return out;
    }

    // Full (p+2) x (p+2) derivative with respect to (px0, r, theta).
    Mat jacobian_matrix(const Vec& px0) const {
        Mat d(p + 2, p + 2);
        d.setZero();
        d.topLeftCorner(p, p) = K;
        d.block(0, p, p, 1) = Kr * px0;
        d.block(0, p + 1, p, 1) = Kth * px0;
        d.block(p, 0, 1, p) = (px0.transpose() * (S1 + S1.transpose()));
        d.block(p + 1, 0, 1, p) = (px0.transpose() * (S2 + S2.transpose()));
        d(p, p) = px0.dot(S1r * px0);
        d(p, p + 1) = px0.dot(S1th * px0);
        d(p + 1, p) = px0.dot(S2r * px0);
        d(p + 1, p + 1) = px0.dot(S2th * px0);
        return d;
    }

    double jacobian_det(const Vec& px0) const { return jacobian_matrix(px0).determinant(); }
};

// Assemble the nine matrices by Chebyshev collocation in time.  Node count
// grows with the total rotation phase so trigonometric content stays
// resolved to spectral accuracy.
inline ExpMapData exp_map_data(const CorankTwoStructure& s, double theta, double r,
                               const detail::PencilBlocks* precomputed = nullptr) {
    if (!s.normalized()) throw Error("exp_map_data: structure must be normalized");
    const int p = s.p();
    const detail::PencilBlocks blocks =
        precomputed ? *precomputed : detail::pencil_blocks(s, theta);
    const double phase = blocks.omega.empty() ? 0.0 : r * blocks.omega[0];

    int n = static_cast<int>(3.0 * std::abs(phase)) + 32;
    n = ((n + 15) / 16) * 16;
    const ChebIntegration& cheb = cheb_integration(n);
    const int nn = n + 1;

    const Mat pmat = pencil(s, theta, 1.0).matrix.entries();
    const Mat ptheta =
        -std::sin(theta) * s.L1().entries() + std::cos(theta) * s.L2().entries();
    const Mat& l1 = s.L1().entries();
    const Mat& l2 = s.L2().entries();

    // Value tables: each row is a flattened p x p matrix at one node.
    auto flatten = [p](const Mat& m) { return Eigen::Map<const Vec>(m.data(), p * p); };
    auto unflatten = [p](const Eigen::RowVectorXd& v) {
        return Mat(Eigen::Map<const Mat>(v.data(), p, p));
    };

    Mat u_tab(nn, p * p), m_tab(nn, p * p), vr_tab(nn, p * p);
    std::vector<Mat> u_at(nn);
    for (int k = 0; k < nn; ++k) {
        const double sk = cheb.nodes()(k);
        u_at[k] = blocks.flow(sk, r);
        u_tab.row(k) = flatten(u_at[k]).transpose();
        m_tab.row(k) = flatten((u_at[k].transpose() * ptheta * u_at[k]).eval()).transpose();
        vr_tab.row(k) = flatten((-sk * u_at[k] * pmat).eval()).transpose();
    }

    const Mat k_tab = cheb.integrate_running(u_tab);
    const Mat w_tab = cheb.integrate_running(m_tab);
    Mat vth_tab(nn, p * p);
    for (int k = 0; k < nn; ++k) {
        vth_tab.row(k) =
            flatten((-r * u_at[k] * unflatten(w_tab.row(k))).eval()).transpose();
    }
    const Mat kr_tab = cheb.integrate_running(vr_tab);
    const Mat kth_tab = cheb.integrate_running(vth_tab);

    Mat y1_tab(nn, p * p), y2_tab(nn, p * p);
    Mat y1r_tab(nn, p * p), y2r_tab(nn, p * p), y1th_tab(nn, p * p), y2th_tab(nn, p * p);
    for (int k = 0; k < nn; ++k) {
        const Mat kk = unflatten(k_tab.row(k));
        const Mat krk = unflatten(kr_tab.row(k));
        const Mat kthk = unflatten(kth_tab.row(k));
        const Mat vrk = unflatten(vr_tab.row(k));
        const Mat vthk = unflatten(vth_tab.row(k));
        y1_tab.row(k) = flatten((0.5 * kk.transpose() * l1 * u_at[k]).eval()).transpose();
        y2_tab.row(k) = flatten((0.5 * kk.transpose() * l2 * u_at[k]).eval()).transpose();
        y1r_tab.row(k) = flatten(
            (0.5 * (krk.transpose() * l1 * u_at[k] + kk.transpose() * l1 * vrk)).eval()).transpose();
        y2r_tab.row(k) = flatten(
            (0.5 * (krk.transpose() * l2 * u_at[k] + kk.transpose() * l2 * vrk)).eval()).transpose();
        y1th_tab.row(k) = flatten(
            (0.5 * (kthk.transpose() * l1 * u_at[k] + kk.transpose() * l1 * vthk)).eval()).transpose();
        y2th_tab.row(k) = flatten(
            (0.5 * (kthk.transpose() * l2 * u_at[k] + kk.transpose() * l2 * vthk)).eval()).transpose();
    }

    ExpMapData out;
    out.p = p;
    out.theta = theta;
    out.r = r;
    out.K = unflatten(k_tab.row(n));
    out.Kr = unflatten(kr_tab.row(n));
    out.Kth = unflatten(kth_tab.row(n));
    out.S1 = unflatten((cheb.matrix().row(n) * y1_tab).eval());
    out.S2 = unflatten((cheb.matrix().row(n) * y2_tab).eval());
    out.S1r = unflatten((cheb.matrix().row(n) * y1r_tab).eval());
    out.S2r = unflatten((cheb.matrix().row(n) * y2r_tab).eval());
    out.S1th = unflatten((cheb.matrix().row(n) * y1th_tab).eval());
    out.S2th = unflatten((cheb.matrix().row(n) * y2th_tab).eval());
    return out;
}

struct JacobianResult {
    double det = 0.0;
    Vec singular_values; // descending, p+2 of them
};

// Jacobian determinant of the time-1 exponential map in (px0, r, theta)
// coordinates, with the full singular spectrum of the derivative.
inline JacobianResult exp_jacobian(const CorankTwoStructure& s, const Covector& c) {
    const ExpMapData data = exp_map_data(s, c.theta, c.r);
    const Mat d = data.jacobian_matrix(c.px0);
    JacobianResult out;
    out.det = d.determinant();
    Eigen::JacobiSVD<Mat> svd(d);
    out.singular_values = svd.singularValues();
    return out;
}

// Built-in cross-check: central differences with one Richardson step.
inline double exp_jacobian_fd(const CorankTwoStructure& s, const Covector& c,
                              double step = 1e-5) {
    const int p = s.p();
    auto map_at = [&](const Vec& px0, double r, double theta) {
        return exp_map(s, Covector{px0, theta, r});
    };
    auto jac_with_step = [&](double h) {
        Mat d(p + 2, p + 2);
        for (int i = 0; i < p + 2; ++i) {
            Vec pp = c.px0, pm = c.px0;
            double rp = c.r, rm = c.r, tp = c.theta, tm = c.theta;
            if (i < p) {
                pp(i) += h;
                pm(i) -= h;
            } else if (i == p) {
                rp += h;
                rm -= h;
            } else {
                tp += h;
                tm -= h;
            }
            d.col(i) = (map_at(pp, rp, tp) - map_at(pm, rm, tm)) / (2.0 * h);
        }
        return d;
    };
    const double scale = std::max(1.0, std::max(c.px0.norm(), c.r));
    const double h = step * scale;
    const Mat d1 = jac_with_step(h);
    const Mat d2 = jac_with_step(0.5 * h);
    return ((4.0 * d2 - d1) / 3.0).determinant();
}

} // namespace nilgeo
