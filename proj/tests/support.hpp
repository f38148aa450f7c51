#pragma once

// Shared helpers for the test suites: seeded generators and the independent
// spectral oracle (a general-purpose complex eigensolver).

#include <algorithm>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "nilgeo/skew.hpp"

namespace testsupport {

using nilgeo::Mat;
using nilgeo::SkewMatrix;
using nilgeo::Vec;

inline SkewMatrix random_skew(int p, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> gauss(0.0, scale);
    Mat m = Mat::Zero(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = i + 1; j < p; ++j) {
            m(i, j) = gauss(rng);
            m(j, i) = -m(i, j);
        }
    }
    return SkewMatrix(m);
}

inline Mat random_orthogonal(int p, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat a(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) a(i, j) = gauss(rng);
    }
    Eigen::HouseholderQR<Mat> qr(a);
    Mat q = qr.householderQ();
    const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < p; ++i) {
        if (r(i, i) < 0) q.col(i) = -q.col(i);
    }
    return q;
}

inline Vec random_unit(int p, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec v(p);
    for (int i = 0; i < p; ++i) v(i) = gauss(rng);
    return v / v.norm();
}

// Independent oracle: eigenvalue moduli of a real matrix from the general
// complex eigensolver, paired and sorted nonincreasing.
inline std::vector<double> oracle_moduli(const Mat& a) {
    Eigen::EigenSolver<Mat> es(a);
    std::vector<double> im;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        im.push_back(std::abs(es.eigenvalues()(i).imag()));
    }
    std::sort(im.begin(), im.end(), std::greater<double>());
    // Eigenvalues of a skew matrix come in pairs +-i w; keep one per pair.
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < im.size(); i += 2) out.push_back(0.5 * (im[i] + im[i + 1]));
    return out;
}

} // namespace testsupport
