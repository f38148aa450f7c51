#pragma once

// Spectral and algebraic primitives for real skew-symmetric matrices:
// eigenvalue moduli, real 2x2-block normal forms, multiplicity grouping,
// Hilbert-Schmidt geometry and centralizer dimensions.
//
// The spectrum of A in so(p) is {±i*w_1, ..., ±i*w_m} (plus a structural 0
// for odd p).  Moduli are recovered from the symmetric eigenproblem on A'A,
// the orthogonal block frame from a Schur-style pairing v, Av/|Av| inside
// each (clustered) eigenspace of A'A.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nilgeo/errors.hpp"

namespace nilgeo {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Relative tolerance used when grouping eigenvalue moduli into multiplicity
// classes.  Overridable in every call that performs grouping.
inline double default_group_tol(double top_modulus) {
    return 1e-8 * (1.0 + top_modulus);
}

// Relative singular-value threshold below which the commutator operator is
// considered to annihilate a direction.  The answers are integers separated
// by at least 1, so any threshold in a wide band gives the same counts; the
// band is exercised in tests.
inline constexpr double kNullityThreshold = 1e-8;

class SkewMatrix {
public:
    explicit SkewMatrix(Mat entries) : m_(std::move(entries)) {
        if (m_.rows() != m_.cols() || m_.rows() < 1) {
            throw DimensionError("SkewMatrix: entries must be square and nonempty");
        }
        const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
        const double defect = (m_ + m_.transpose()).cwiseAbs().maxCoeff();
        if (defect > 1e-12 * scale) {
            throw DimensionError("SkewMatrix: entries are not antisymmetric (defect " +
                                 std::to_string(defect) + ")");
        }
        m_ = 0.5 * (m_ - m_.transpose().eval());
    }

    static SkewMatrix zero(int p) { return SkewMatrix(Mat::Zero(p, p)); }

    int dim() const { return static_cast<int>(m_.rows()); }
    const Mat& entries() const { return m_; }
    double norm() const { return m_.norm(); }

    SkewMatrix operator+(const SkewMatrix& other) const {
        require_same_dim(other, "operator+");
        return SkewMatrix(m_ + other.m_);
    }
    SkewMatrix operator-(const SkewMatrix& other) const {
        require_same_dim(other, "operator-");
        return SkewMatrix(m_ - other.m_);
    }
    friend SkewMatrix operator*(double c, const SkewMatrix& a) { return SkewMatrix(c * a.m_); }

    void require_same_dim(const SkewMatrix& other, const char* what) const {
        if (other.dim() != dim()) {
            throw DimensionError(std::string(what) + ": dimension mismatch (" +
                                 std::to_string(dim()) + " vs " + std::to_string(other.dim()) + ")");
        }
    }

private:
    Mat m_;
};

struct SpectralData {
    std::vector<double> moduli;      // floor(p/2) values, nonincreasing
    std::vector<int> multiplicities; // grouping of equal moduli
    Mat block_frame;                 // orthogonal G with G'AG = Bd(w_1 J, ..., [0])
    double gap = 0.0;                // smallest difference between distinct moduli
};

// (1/p) * trace(A'B); the normalization that makes the so(4) quaternion basis
// orthonormal and the Popp construction read in coordinate norms.
inline double hs_inner(const SkewMatrix& a, const SkewMatrix& b) {
    a.require_same_dim(b, "hs_inner");
    return (a.entries().transpose() * b.entries()).trace() / static_cast<double>(a.dim());
}

inline double hs_norm(const SkewMatrix& a) { return std::sqrt(hs_inner(a, a)); }

namespace detail {

// Orthonormalize v against the first `used` columns of `basis`.  Returns the
// residual norm before the final normalization (0 means v was in the span).
inline double orthonormalize_against(Vec& v, const Mat& basis, int used) {
    double r = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
        for (int c = 0; c < used; ++c) {
            v -= basis.col(c).dot(v) * basis.col(c);
        }
        r = v.norm();
    }
    if (r > 0) v /= r;
    return r;
}

} // namespace detail

// Full spectral data: moduli from the symmetric eigenproblem on A'A, the
// block frame by pairing v with Av/|Av| inside each clustered eigenspace.
// Deterministic for identical input.
inline SpectralData eigen_moduli(const SkewMatrix& A, double group_tol = -1.0) {
    const int p = A.dim();
    const Mat& a = A.entries();
    Mat s = a.transpose() * a;
    s = 0.5 * (s + s.transpose().eval());

    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    if (es.info() != Eigen::Success) {
        throw Error("eigen_moduli: symmetric eigensolver failed");
    }

    // Descending omega = sqrt(eigenvalue of A'A).
    std::vector<double> omega(p);
    std::vector<int> order(p);
    for (int i = 0; i < p; ++i) {
        order[i] = p - 1 - i;
        omega[i] = std::sqrt(std::max(0.0, es.eigenvalues()(order[i])));
    }
    const double top = omega[0];
    const double cluster_tol = 1e-7 * (1.0 + top);
    const double zero_tol = 1e-12 * (1.0 + top);

    struct Pair {
        Vec v, w;
        double modulus;
    };
    std::vector<Pair> pairs;
    std::vector<Vec> kernel; // directions annihilated by A (up to rounding)
    Mat chosen(p, p);        // accumulated orthonormal columns
    int used = 0;

    int i = 0;
    while (i < p) {
        int j = i;
        while (j + 1 < p && omega[i] - omega[j + 1] <= cluster_tol) ++j;

        // Cluster subspace, orthonormalized against everything already chosen.
        std::vector<Vec> residual;
        for (int k = i; k <= j; ++k) {
            Vec v = es.eigenvectors().col(order[k]);
            if (detail::orthonormalize_against(v, chosen, used) > 1e-6) residual.push_back(v);
        }

        while (!residual.empty()) {
            // Re-project survivors and take the best-conditioned one.
            std::size_t best = 0;
            double best_norm = -1.0;
            for (std::size_t k = 0; k < residual.size(); ++k) {
                const double r = detail::orthonormalize_against(residual[k], chosen, used);
                if (r > best_norm) {
                    best_norm = r;
                    best = k;
                }
            }
            if (best_norm < 1e-8) break;
            Vec v = residual[best];
            residual.erase(residual.begin() + static_cast<std::ptrdiff_t>(best));

            Vec av = a * v;
            if (av.norm() <= zero_tol) {
                // Kernel direction; the sqrt-amplified omega is unreliable here.
                kernel.push_back(v);
                chosen.col(used++) = v;
                continue;
            }
            Vec w = av / av.norm();
            detail::orthonormalize_against(w, chosen, used);
            w -= v.dot(w) * v;
            w /= w.norm();
            double block = w.dot(a * v); // lands at position (2,1) of the block
            if (block < 0) {
                w = -w;
                block = -block;
            }
            pairs.push_back({v, w, block});
            chosen.col(used++) = v;
            chosen.col(used++) = w;
        }
        i = j + 1;
    }

    std::vector<Vec> kernel_singles;
    for (std::size_t k = 0; k + 1 < kernel.size(); k += 2) {
        pairs.push_back({kernel[k], kernel[k + 1], 0.0});
    }
    if (kernel.size() % 2 == 1) kernel_singles.push_back(kernel.back());

    if (used != p) {
        throw Error("eigen_moduli: block reduction failed to span (got " +
                    std::to_string(used) + " of " + std::to_string(p) + ")");
    }

    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& x, const Pair& y) { return x.modulus > y.modulus; });

    SpectralData out;
    out.block_frame.resize(p, p);
    int col = 0;
    for (const auto& pr : pairs) {
        out.moduli.push_back(pr.modulus);
        out.block_frame.col(col++) = pr.v;
        out.block_frame.col(col++) = pr.w;
    }
    for (const auto& v : kernel_singles) out.block_frame.col(col++) = v;

    const double tol = group_tol > 0 ? group_tol : default_group_tol(top);
    std::size_t g = 0;
    while (g < out.moduli.size()) {
        std::size_t h = g;
        while (h + 1 < out.moduli.size() && out.moduli[g] - out.moduli[h + 1] <= tol) ++h;
        out.multiplicities.push_back(static_cast<int>(h - g + 1));
        g = h + 1;
    }
    out.gap = std::numeric_limits<double>::infinity();
    std::size_t idx = 0;
    double prev_rep = 0.0;
    for (std::size_t gi = 0; gi < out.multiplicities.size(); ++gi) {
        const double rep = out.moduli[idx];
        if (gi > 0) out.gap = std::min(out.gap, prev_rep - rep);
        prev_rep = rep;
        idx += static_cast<std::size_t>(out.multiplicities[gi]);
    }
    return out;
}

inline double max_modulus(const SkewMatrix& A) {
    // Largest singular value of A equals the top eigenvalue modulus.
    if (A.norm() == 0.0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(A.entries());
    return svd.singularValues()(0);
}

// Number of moduli within tol of the largest one.
inline int multiplicity_at_top(const SkewMatrix& A, double tol) {
    const SpectralData sd = eigen_moduli(A, tol);
    return sd.multiplicities.empty() ? 0 : sd.multiplicities.front();
}

// dim{X in so(p) : XD = DX}, as the numerical nullity of X -> [X, D] on the
// elementary basis E_ab = e_a e_b' - e_b e_a', a < b.
inline int centralizer_dimension(const SkewMatrix& D) {
    const int p = D.dim();
    const int m = p * (p - 1) / 2;
    const Mat& d = D.entries();

    Mat op(m, m);
    int col = 0;
    for (int a = 0; a < p; ++a) {
        for (int b = a + 1; b < p; ++b) {
            Mat x = Mat::Zero(p, p);
            x(a, b) = 1.0;
            x(b, a) = -1.0;
            const Mat c = x * d - d * x;
            int row = 0;
            for (int ii = 0; ii < p; ++ii) {
                for (int jj = ii + 1; jj < p; ++jj) op(row++, col) = c(ii, jj);
            }
            ++col;
        }
    }
    Eigen::JacobiSVD<Mat> svd(op);
    const double smax = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    if (smax < 1e-14) return m;
    int nullity = 0;
    for (int k = 0; k < svd.singularValues().size(); ++k) {
        if (svd.singularValues()(k) < kNullityThreshold * smax) ++nullity;
    }
    return nullity;
}

// Codimension bookkeeping for the double- and triple-eigenvalue model orbits
// in so(2n) under orthogonal conjugation.
struct OrbitModelReport {
    std::string model;      // "generic", "double", "triple"
    int so_dim = 0;         // n(2n-1)
    int centralizer_dim = 0;
    int orbit_dim = 0;      // so_dim - centralizer_dim
    int family_dim = 0;     // moduli parameters of the model
    int codimension = 0;    // so_dim - orbit_dim - family_dim
};

struct OrbitCodimReport {
    int n = 0;
    std::vector<OrbitModelReport> models;
};

namespace detail {

inline SkewMatrix block_diag_rotations(const std::vector<double>& omegas) {
    const int p = 2 * static_cast<int>(omegas.size());
    Mat m = Mat::Zero(p, p);
    for (std::size_t i = 0; i < omegas.size(); ++i) {
        m(2 * i, 2 * i + 1) = -omegas[i];
        m(2 * i + 1, 2 * i) = omegas[i];
    }
    return SkewMatrix(m);
}

} // namespace detail

inline OrbitCodimReport orbit_codimension_report(int n) {
    if (n < 2 || n > 6) {
        throw DimensionError("orbit_codimension_report: n must be in [2, 6]");
    }
    const int m = n * (2 * n - 1);
    OrbitCodimReport rep;
    rep.n = n;

    auto generic_tail = [](int count) {
        std::vector<double> w;
        for (int i = 0; i < count; ++i) w.push_back(3.0 + 0.6180339887498949 * (i + 1));
        return w;
    };
    auto push = [&](const std::string& name, const std::vector<double>& omegas, int family_dim) {
        const SkewMatrix d = detail::block_diag_rotations(omegas);
        OrbitModelReport mr;
        mr.model = name;
        mr.so_dim = m;
        mr.centralizer_dim = centralizer_dimension(d);
        mr.orbit_dim = m - mr.centralizer_dim;
        mr.family_dim = family_dim;
        mr.codimension = m - mr.orbit_dim - mr.family_dim;
        rep.models.push_back(mr);
    };

    {
        std::vector<double> w{2.0};
        for (double x : generic_tail(n - 1)) w.push_back(x);
        push("generic", w, n);
    }
    {
        std::vector<double> w{2.0, 2.0};
        for (double x : generic_tail(n - 2)) w.push_back(x);
        push("double", w, n - 1);
    }
    if (n >= 3) {
        std::vector<double> w{2.0, 2.0, 2.0};
        for (double x : generic_tail(n - 3)) w.push_back(x);
        push("triple", w, n - 2);
    }
    return rep;
}

} // namespace nilgeo
