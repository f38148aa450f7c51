#pragma once

// Quaternion calculus on so(4) and versal coordinates near a double top
// eigenvalue.
//
// so(4) = Q + Qhat splits into two commuting 3-dimensional summands, the
// pure quaternions (basis i, j, k) and pure skew-quaternions (basis ihat,
// jhat, khat).  In the (1/4)*trace(A'B) inner product the six basis matrices
// are orthonormal, and the eigenvalue moduli of A = q + qhat are
//
//     w1 = |q| + |qhat|,   w2 = ||q| - |qhat||,
//
// so A has a double eigenvalue exactly when one summand vanishes.

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "nilgeo/skew.hpp"

namespace nilgeo {

using Vec3 = Eigen::Vector3d;

namespace so4 {

inline const std::array<Mat, 3>& quaternion_basis() {
    static const std::array<Mat, 3> basis = [] {
        std::array<Mat, 3> b;
        b[0].resize(4, 4);
        b[0] << 0, -1, 0, 0,
                1,  0, 0, 0,
                0,  0, 0, -1,
                0,  0, 1, 0;
        b[1].resize(4, 4);
        b[1] << 0, 0, -1, 0,
                0, 0,  0, 1,
                1, 0,  0, 0,
                0, -1, 0, 0;
        b[2].resize(4, 4);
        b[2] << 0, 0,  0, -1,
                0, 0, -1,  0,
                0, 1,  0,  0,
                1, 0,  0,  0;
        return b;
    }();
    return basis;
}

inline const std::array<Mat, 3>& skew_quaternion_basis() {
    static const std::array<Mat, 3> basis = [] {
        std::array<Mat, 3> b;
        b[0].resize(4, 4);
        b[0] << 0, -1, 0, 0,
                1,  0, 0, 0,
                0,  0, 0, 1,
                0,  0, -1, 0;
        b[1].resize(4, 4);
        b[1] << 0,  0, 1, 0,
                0,  0, 0, 1,
               -1,  0, 0, 0,
                0, -1, 0, 0;
        b[2].resize(4, 4);
        b[2] << 0,  0, 0, -1,
                0,  0, 1,  0,
                0, -1, 0,  0,
                1,  0, 0,  0;
        return b;
    }();
    return basis;
}

} // namespace so4

struct QuaternionPair {
    Vec3 q;    // coordinates on i, j, k
    Vec3 qhat; // coordinates on ihat, jhat, khat
};

inline QuaternionPair quaternion_split(const SkewMatrix& A) {
    if (A.dim() != 4) {
        throw DimensionError("quaternion_split: matrix must be 4x4");
    }
    QuaternionPair out;
    for (int a = 0; a < 3; ++a) {
        out.q(a) = 0.25 * so4::quaternion_basis()[a].cwiseProduct(A.entries()).sum();
        out.qhat(a) = 0.25 * so4::skew_quaternion_basis()[a].cwiseProduct(A.entries()).sum();
    }
    return out;
}

inline SkewMatrix quaternion_reconstruct(const QuaternionPair& P) {
    Mat m = Mat::Zero(4, 4);
    for (int a = 0; a < 3; ++a) {
        m += P.q(a) * so4::quaternion_basis()[a] + P.qhat(a) * so4::skew_quaternion_basis()[a];
    }
    return SkewMatrix(m);
}

// Eigenvalue moduli of q + qhat: (|q| + |qhat|, ||q| - |qhat||).
inline std::pair<double, double> eig_moduli_quaternionic(const QuaternionPair& P) {
    const double nq = P.q.norm();
    const double nh = P.qhat.norm();
    return {nq + nh, std::abs(nq - nh)};
}

// A 4x4 skew matrix has a double eigenvalue iff it lies in Q or Qhat.
inline bool is_double(const SkewMatrix& A, double tol) {
    const QuaternionPair P = quaternion_split(A);
    return std::min(P.q.norm(), P.qhat.norm()) <= tol * (1.0 + A.norm());
}

struct VersalCoordinates {
    double lambda = 0.0;              // smooth scalar, norm of the dominant summand
    Vec3 q = Vec3::Zero();            // transversal coordinate; vanishes on the stratum
    std::vector<double> delta_moduli; // moduli of the complementary block, decreasing
    Mat frame;                        // orthogonal; A = frame' * Bd(M4, Delta) * frame
};

// Extract (lambda, q, Delta) near a double-not-triple top eigenvalue.
//
// The top 4-dimensional invariant subspace (the two leading blocks of the
// normal form) is gauge-fixed by least-squares alignment to the first four
// columns of ref_frame, which makes the extraction locally smooth and
// single-valued along continuation paths.  A reflection of the last basis
// vector swaps the two summands of so(4); it is applied whenever needed so
// that the dominant summand is the skew-quaternion one, hence
// lambda + |q| = top modulus and lambda - |q| = second modulus.
inline VersalCoordinates versal_extract(const SkewMatrix& A, const Mat& ref_frame,
                                        double tol = -1.0) {
    const int p = A.dim();
    if (p < 4) {
        throw DimensionError("versal_extract: matrix dimension must be at least 4");
    }
    if (ref_frame.rows() != p || ref_frame.cols() < 4) {
        throw DimensionError("versal_extract: ref_frame must be p x (>=4)");
    }
    const SpectralData sd = eigen_moduli(A);
    const double w1 = sd.moduli[0];
    const double w2 = sd.moduli[1];
    const double w3 = sd.moduli.size() >= 3 ? sd.moduli[2] : 0.0;
    const double gap_tol = tol > 0 ? tol : default_group_tol(w1);
    if (p > 4 && w2 - w3 <= 10.0 * gap_tol) {
        throw GapTooSmall("versal_extract: top two blocks not separated from the rest (w2 - w3 = " +
                          std::to_string(w2 - w3) + ")");
    }

    Mat u = sd.block_frame.leftCols(4);
    // Orthogonal Procrustes: basis of the invariant subspace closest to the
    // reference columns.
    Eigen::JacobiSVD<Mat> svd(u.transpose() * ref_frame.leftCols(4),
                              Eigen::ComputeFullU | Eigen::ComputeFullV);
    u = u * (svd.matrixU() * svd.matrixV().transpose());

    SkewMatrix m4(((u.transpose() * A.entries() * u).eval() -
                   (u.transpose() * A.entries() * u).transpose().eval()) *
                  0.5);
    QuaternionPair split = quaternion_split(m4);
    if (split.q.norm() > split.qhat.norm()) {
        u.col(3) = -u.col(3); // swap the summands
        m4 = SkewMatrix(((u.transpose() * A.entries() * u).eval() -
                         (u.transpose() * A.entries() * u).transpose().eval()) *
                        0.5);
        split = quaternion_split(m4);
    }

    VersalCoordinates out;
    out.lambda = split.qhat.norm();
    out.q = split.q;
    for (std::size_t k = 2; k < sd.moduli.size(); ++k) out.delta_moduli.push_back(sd.moduli[k]);
    Mat cols(p, p);
    cols.leftCols(4) = u;
    cols.rightCols(p - 4) = sd.block_frame.rightCols(p - 4);
    out.frame = cols.transpose();
    return out;
}

} // namespace nilgeo
