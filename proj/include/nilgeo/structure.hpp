#pragma once

// Corank-2 step-2 structures and smooth families of them: Popp
// normalization, Hausdorff dimension, the theta-pencil, family files, and
// location of eigenvalue-resonance points.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nilgeo/quaternion.hpp"
#include "nilgeo/skew.hpp"
#include "nilgeo/version.hpp"

namespace nilgeo {

class CorankTwoStructure {
public:
    CorankTwoStructure(SkewMatrix l1, SkewMatrix l2, bool normalized)
        : l1_(std::move(l1)), l2_(std::move(l2)), normalized_(normalized) {
        l1_.require_same_dim(l2_, "CorankTwoStructure");
        if (l1_.dim() < 3) {
            throw DimensionError("CorankTwoStructure: rank must be at least 3");
        }
    }

    int p() const { return l1_.dim(); }
    const SkewMatrix& L1() const { return l1_; }
    const SkewMatrix& L2() const { return l2_; }
    bool normalized() const { return normalized_; }

private:
    SkewMatrix l1_, l2_;
    bool normalized_;
};

// Gram-Schmidt in the Hilbert-Schmidt inner product.  The first output is
// L1raw normalized; the span of the pair is preserved.
inline CorankTwoStructure popp_normalize(const SkewMatrix& l1raw, const SkewMatrix& l2raw) {
    l1raw.require_same_dim(l2raw, "popp_normalize");
    const double n1 = hs_norm(l1raw);
    const double n2 = hs_norm(l2raw);
    if (n1 < 1e-12 || n2 < 1e-12) {
        throw DependentPair("popp_normalize: an input matrix is zero");
    }
    const double c = hs_inner(l1raw, l2raw) / (n1 * n2);
    if (1.0 - c * c <= 1e-10) {
        throw DependentPair("popp_normalize: pair is linearly dependent (gram determinant " +
                            std::to_string(1.0 - c * c) + ")");
    }
    const SkewMatrix l1 = (1.0 / n1) * l1raw;
    const SkewMatrix proj = hs_inner(l2raw, l1) * l1;
    const SkewMatrix residual = l2raw - proj;
    const SkewMatrix l2 = (1.0 / hs_norm(residual)) * residual;
    return CorankTwoStructure(l1, l2, true);
}

// Q = p + 2k with k = 2: every bracket direction carries weight 2.
inline int hausdorff_dimension(const CorankTwoStructure& s) {
    if (!s.normalized()) {
        throw Error("hausdorff_dimension: structure must be normalized");
    }
    return s.p() + 4;
}

struct Pencil {
    CorankTwoStructure structure;
    double theta = 0.0;
    double r = 1.0;
    SkewMatrix matrix; // r * (cos(theta) L1 + sin(theta) L2)
};

inline Pencil pencil(const CorankTwoStructure& s, double theta, double r = 1.0) {
    if (!s.normalized()) {
        throw Error("pencil: structure must be normalized");
    }
    SkewMatrix m(r * (std::cos(theta) * s.L1().entries() + std::sin(theta) * s.L2().entries()));
    return Pencil{s, theta, r, std::move(m)};
}

// ---------------------------------------------------------------------------
// Families: polynomial maps from parameter space to pairs of skew matrices.

struct FamilyTerm {
    std::vector<int> exponents; // one per parameter
    SkewMatrix coeff;
};

struct StructureFamily {
    int p = 0;
    int param_dim = 0;
    std::string name;
    std::string description;
    std::vector<FamilyTerm> l1_terms;
    std::vector<FamilyTerm> l2_terms;

    int ambient_dim() const { return p + 2; }
};

namespace detail {

inline Mat eval_terms(const std::vector<FamilyTerm>& terms, const Vec& xi, int p) {
    Mat out = Mat::Zero(p, p);
    for (const auto& t : terms) {
        double mono = 1.0;
        for (std::size_t i = 0; i < t.exponents.size(); ++i) {
            for (int e = 0; e < t.exponents[i]; ++e) mono *= xi(static_cast<int>(i));
        }
        out += mono * t.coeff.entries();
    }
    return out;
}

} // namespace detail

inline SkewMatrix eval_family_raw_l1(const StructureFamily& f, const Vec& xi) {
    return SkewMatrix(detail::eval_terms(f.l1_terms, xi, f.p));
}

inline SkewMatrix eval_family_raw_l2(const StructureFamily& f, const Vec& xi) {
    return SkewMatrix(detail::eval_terms(f.l2_terms, xi, f.p));
}

inline CorankTwoStructure eval_family(const StructureFamily& f, const Vec& xi) {
    if (xi.size() != f.param_dim) {
        throw DimensionError("eval_family: parameter vector has wrong dimension");
    }
    try {
        return popp_normalize(eval_family_raw_l1(f, xi), eval_family_raw_l2(f, xi));
    } catch (const DependentPair& e) {
        std::ostringstream msg;
        msg << e.what() << " at xi = (";
        for (int i = 0; i < xi.size(); ++i) msg << (i ? ", " : "") << xi(i);
        msg << ")";
        throw DependentPair(msg.str());
    }
}

// ---------------------------------------------------------------------------
// Family file format (nilgeo-family/1).
//
//   format = nilgeo-family/1
//   name = F_generic
//   description = ...
//   p = 4
//   param_dim = 3
//
//   [L1]
//   monomial 0 0 0
//   entry 0 1 -1
//
//   [L2]
//   ...
//
// Entries are strictly upper-triangle (row < col); the lower triangle is
// implied by antisymmetry.  Values are parsed as exact decimals and echoed
// on save with 17 significant digits, which round-trips every double.

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string save_family_string(const StructureFamily& f) {
    std::ostringstream out;
    out << "format = " << kFamilyFormat << "\n";
    out << "name = " << f.name << "\n";
    if (!f.description.empty()) out << "description = " << f.description << "\n";
    out << "p = " << f.p << "\n";
    out << "param_dim = " << f.param_dim << "\n";
    auto dump = [&](const char* header, const std::vector<FamilyTerm>& terms) {
        out << "\n[" << header << "]\n";
        for (const auto& t : terms) {
            out << "monomial";
            for (int e : t.exponents) out << " " << e;
            out << "\n";
            const Mat& m = t.coeff.entries();
            for (int i = 0; i < m.rows(); ++i) {
                for (int j = i + 1; j < m.cols(); ++j) {
                    if (m(i, j) != 0.0) {
                        out << "entry " << i << " " << j << " " << format_double(m(i, j)) << "\n";
                    }
                }
            }
        }
    };
    dump("L1", f.l1_terms);
    dump("L2", f.l2_terms);
    return out.str();
}

inline void save_family(const StructureFamily& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_family: cannot open " + path);
    out << save_family_string(f);
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct PendingTerm {
    std::vector<int> exponents;
    std::vector<std::tuple<int, int, double>> entries;
    int line = 0;
};

inline FamilyTerm finish_term(const PendingTerm& t, int p) {
    Mat m = Mat::Zero(p, p);
    for (const auto& [r, c, v] : t.entries) {
        m(r, c) += v;
        m(c, r) -= v;
    }
    return FamilyTerm{t.exponents, SkewMatrix(m)};
}

} // namespace detail

inline StructureFamily load_family_string(const std::string& text) {
    StructureFamily f;
    bool format_seen = false, p_seen = false, dim_seen = false;
    int section = 0; // 0 header, 1 L1, 2 L2
    std::vector<detail::PendingTerm> pending[3];

    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line == "[L1]") {
            section = 1;
            continue;
        }
        if (line == "[L2]") {
            section = 2;
            continue;
        }
        if (line[0] == '[') throw ParseError("unknown section " + line, lineno);

        if (section == 0) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
            const std::string key = detail::trim(line.substr(0, eq));
            const std::string val = detail::trim(line.substr(eq + 1));
            if (key == "format") {
                if (val != kFamilyFormat) throw ParseError("unsupported format '" + val + "'", lineno);
                format_seen = true;
            } else if (key == "name") {
                f.name = val;
            } else if (key == "description") {
                f.description = val;
            } else if (key == "p") {
                try {
                    f.p = std::stoi(val);
                } catch (...) {
                    throw ParseError("field p: not an integer", lineno);
                }
                if (f.p < 3) throw ParseError("field p: rank must be at least 3", lineno);
                p_seen = true;
            } else if (key == "param_dim") {
                try {
                    f.param_dim = std::stoi(val);
                } catch (...) {
                    throw ParseError("field param_dim: not an integer", lineno);
                }
                if (f.param_dim < 1) throw ParseError("field param_dim: must be positive", lineno);
                dim_seen = true;
            } else {
                throw ParseError("unknown field '" + key + "'", lineno);
            }
            continue;
        }

        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "monomial") {
            if (!p_seen || !dim_seen) throw ParseError("monomial before p/param_dim", lineno);
            detail::PendingTerm t;
            t.line = lineno;
            int e;
            while (ls >> e) {
                if (e < 0) throw ParseError("monomial: negative exponent", lineno);
                t.exponents.push_back(e);
            }
            if (!ls.eof()) throw ParseError("monomial: malformed exponent list", lineno);
            if (static_cast<int>(t.exponents.size()) != f.param_dim) {
                throw ParseError("monomial: expected " + std::to_string(f.param_dim) + " exponents, got " +
                                     std::to_string(t.exponents.size()),
                                 lineno);
            }
            pending[section].push_back(std::move(t));
        } else if (word == "entry") {
            if (pending[section].empty()) throw ParseError("entry before any monomial", lineno);
            int r, c;
            std::string vstr;
            if (!(ls >> r >> c >> vstr)) throw ParseError("entry: expected 'entry row col value'", lineno);
            std::string rest;
            if (ls >> rest) throw ParseError("entry: trailing tokens", lineno);
            if (r < 0 || c < 0 || r >= f.p || c >= f.p) {
                throw ParseError("entry: index out of range for p = " + std::to_string(f.p), lineno);
            }
            if (r >= c) throw ParseError("entry: must be strictly upper-triangle (row < col)", lineno);
            char* end = nullptr;
            const double v = std::strtod(vstr.c_str(), &end);
            if (end == vstr.c_str() || *end != '\0') throw ParseError("entry: bad value '" + vstr + "'", lineno);
            pending[section].back().entries.emplace_back(r, c, v);
        } else {
            throw ParseError("unknown record '" + word + "'", lineno);
        }
    }

    if (!format_seen) throw ParseError("missing 'format' field");
    if (!p_seen) throw ParseError("missing 'p' field");
    if (!dim_seen) throw ParseError("missing 'param_dim' field");
    if (pending[1].empty() || pending[2].empty()) throw ParseError("both [L1] and [L2] need at least one monomial");
    for (const auto& t : pending[1]) f.l1_terms.push_back(detail::finish_term(t, f.p));
    for (const auto& t : pending[2]) f.l2_terms.push_back(detail::finish_term(t, f.p));
    return f;
}

inline StructureFamily load_family(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_family_string(buf.str());
}

// ---------------------------------------------------------------------------
// Built-in families.

namespace detail {

inline FamilyTerm constant_term(int param_dim, const Mat& coeff) {
    return FamilyTerm{std::vector<int>(param_dim, 0), SkewMatrix(coeff)};
}

inline FamilyTerm linear_term(int param_dim, int which, const Mat& coeff) {
    std::vector<int> e(param_dim, 0);
    e[which] = 1;
    return FamilyTerm{e, SkewMatrix(coeff)};
}

} // namespace detail

// p = 4, L1 = i, L2 = ihat: the two summands commute, so the commutator
// vanishes identically and every cut point is conjugate.
inline StructureFamily builtin_commuting() {
    StructureFamily f;
    f.p = 4;
    f.param_dim = 1;
    f.name = "F_commuting";
    f.description = "constant commuting so(4) pair";
    f.l1_terms.push_back(detail::constant_term(1, so4::quaternion_basis()[0]));
    f.l2_terms.push_back(detail::constant_term(1, so4::skew_quaternion_basis()[0]));
    return f;
}

// p = 4, L1 = i, L2(xi) = j + xi_1 ihat + xi_2 jhat + xi_3 khat (normalized
// pointwise).  The skew-quaternion part of the pencil vanishes on xi = 0,
// giving a codimension-3 resonance stratum transversal to the parameters.
inline StructureFamily builtin_generic() {
    StructureFamily f;
    f.p = 4;
    f.param_dim = 3;
    f.name = "F_generic";
    f.description = "so(4) family with full-rank transversal coordinates at its resonance";
    f.l1_terms.push_back(detail::constant_term(3, so4::quaternion_basis()[0]));
    f.l2_terms.push_back(detail::constant_term(3, so4::quaternion_basis()[1]));
    for (int a = 0; a < 3; ++a) {
        f.l2_terms.push_back(detail::linear_term(3, a, so4::skew_quaternion_basis()[a]));
    }
    return f;
}

// p = 4, L1 = i, L2 = jhat, constant in xi: the transversal coordinate
// depends on theta alone, so the rank of its Jacobian is 1.
inline StructureFamily builtin_degenerate() {
    StructureFamily f;
    f.p = 4;
    f.param_dim = 3;
    f.name = "F_degenerate";
    f.description = "constant so(4) pair; transversal coordinate varies along theta only";
    f.l1_terms.push_back(detail::constant_term(3, so4::quaternion_basis()[0]));
    f.l2_terms.push_back(detail::constant_term(3, so4::skew_quaternion_basis()[1]));
    return f;
}

// A generic noncommuting so(6) family.  The block bases collide at the top
// two blocks along the diagonal pencil direction, a constant coupling breaks
// commutativity, and the three parameters move the quaternionic coordinates
// of the top 4x4 block, so a double-not-triple point is reachable and the
// transversal coordinate map has full rank there.
inline StructureFamily builtin_so6_generic() {
    StructureFamily f;
    f.p = 6;
    f.param_dim = 3;
    f.name = "F_so6_generic";
    f.description = "noncommuting so(6) family with a reachable double point";
    Mat a = Mat::Zero(6, 6), b = Mat::Zero(6, 6);
    auto set = [](Mat& m, int r, int c, double v) {
        m(r, c) = v;
        m(c, r) = -v;
    };
    // L1: blocks (3, 1, 2) plus a noncommuting coupling.
    set(a, 0, 1, -3.0);
    set(a, 2, 3, -1.0);
    set(a, 4, 5, -2.0);
    set(a, 0, 2, 0.11);
    set(a, 1, 4, -0.09);
    set(a, 3, 5, 0.07);
    // L2 at xi = 0: blocks (1, 3, 1.5); the raw sum L1 + L2 has top moduli
    // (4, 4, 3.5) and collides in the top pair.
    set(b, 0, 1, -1.0);
    set(b, 2, 3, -3.0);
    set(b, 4, 5, -1.5);
    f.l1_terms.push_back(detail::constant_term(3, a));
    f.l2_terms.push_back(detail::constant_term(3, b));
    // Equal diagonal blocks Bd(wJ, wJ) are pure quaternion; the vanishing
    // summand at the collision is the skew-quaternion one, so the parameters
    // must move exactly that summand.
    for (int c = 0; c < 3; ++c) {
        Mat coupled = Mat::Zero(6, 6);
        coupled.topLeftCorner(4, 4) = so4::skew_quaternion_basis()[c];
        f.l2_terms.push_back(detail::linear_term(3, c, coupled));
    }
    return f;
}

inline StructureFamily builtin_family(const std::string& name) {
    if (name == "F_commuting") return builtin_commuting();
    if (name == "F_generic") return builtin_generic();
    if (name == "F_degenerate") return builtin_degenerate();
    if (name == "F_so6_generic") return builtin_so6_generic();
    throw ConfigError("unknown builtin family '" + name + "'");
}

inline std::vector<std::string> builtin_family_names() {
    return {"F_commuting", "F_generic", "F_degenerate", "F_so6_generic"};
}

// ---------------------------------------------------------------------------
// Resonance location: minimize the gap between the two largest moduli of the
// pencil over z = (theta, xi).

struct ResonancePoint {
    double theta = 0.0;
    Vec xi;
    double gap = 0.0;        // w1 - w2 at the located point
    double top_modulus = 0.0;
    int top_multiplicity = 0;
};

struct ResonanceOptions {
    double search_radius = 0.5; // box half-width around the seed
    double gap_tol = 1e-9;
    double triple_tol = 1e-6;   // relative collision tolerance for the third modulus
    int max_evals = 4000;
};

namespace detail {

// Golden-section minimization of a V-shaped 1-d slice.
template <typename F>
inline double golden_min(F&& fn, double lo, double hi, double tol) {
    const double gr = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = fn(x1), f2 = fn(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = fn(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = fn(x2);
        }
    }
    return f1 < f2 ? x1 : x2;
}

} // namespace detail

inline ResonancePoint resonance_locate(const StructureFamily& f, double seed_theta,
                                       const Vec& seed_xi,
                                       const ResonanceOptions& opt = ResonanceOptions{}) {
    const int dim = 1 + f.param_dim;
    const double big = std::numeric_limits<double>::infinity();

    Vec lo(dim), hi(dim);
    lo(0) = seed_theta - opt.search_radius;
    hi(0) = seed_theta + opt.search_radius;
    for (int i = 0; i < f.param_dim; ++i) {
        lo(i + 1) = seed_xi(i) - opt.search_radius;
        hi(i + 1) = seed_xi(i) + opt.search_radius;
    }

    int evals = 0;
    auto gap_at = [&](const Vec& z) -> double {
        ++evals;
        for (int i = 0; i < dim; ++i) {
            if (z(i) < lo(i) || z(i) > hi(i)) return big;
        }
        try {
            const CorankTwoStructure s = eval_family(f, z.tail(f.param_dim));
            const SpectralData sd = eigen_moduli(pencil(s, z(0)).matrix);
            if (sd.moduli.size() < 2) return big;
            return sd.moduli[0] - sd.moduli[1];
        } catch (const DependentPair&) {
            return big;
        }
    };

    Vec z0(dim);
    z0(0) = seed_theta;
    z0.tail(f.param_dim) = seed_xi;

    // Nelder-Mead downhill simplex.
    std::vector<Vec> simplex{z0};
    for (int i = 0; i < dim; ++i) {
        Vec v = z0;
        v(i) += 0.1 * opt.search_radius;
        simplex.push_back(v);
    }
    std::vector<double> fv;
    for (const auto& v : simplex) fv.push_back(gap_at(v));
    while (evals < opt.max_evals / 2) {
        std::vector<int> idx(simplex.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        std::vector<Vec> sx;
        std::vector<double> sf;
        for (int id : idx) {
            sx.push_back(simplex[id]);
            sf.push_back(fv[id]);
        }
        simplex = sx;
        fv = sf;
        if (fv[0] <= opt.gap_tol * 0.1) break;
        double spread = 0.0;
        for (std::size_t i = 1; i < simplex.size(); ++i) spread = std::max(spread, (simplex[i] - simplex[0]).norm());
        if (spread < 1e-12) break;

        Vec centroid = Vec::Zero(dim);
        for (std::size_t i = 0; i + 1 < simplex.size(); ++i) centroid += simplex[i];
        centroid /= static_cast<double>(simplex.size() - 1);
        const Vec& worst = simplex.back();
        Vec refl = centroid + (centroid - worst);
        double fr = gap_at(refl);
        if (fr < fv[0]) {
            Vec expd = centroid + 2.0 * (centroid - worst);
            const double fe = gap_at(expd);
            if (fe < fr) {
                simplex.back() = expd;
                fv.back() = fe;
            } else {
                simplex.back() = refl;
                fv.back() = fr;
            }
        } else if (fr < fv[fv.size() - 2]) {
            simplex.back() = refl;
            fv.back() = fr;
        } else {
            Vec contr = centroid + 0.5 * (worst - centroid);
            const double fc = gap_at(contr);
            if (fc < fv.back()) {
                simplex.back() = contr;
                fv.back() = fc;
            } else {
                for (std::size_t i = 1; i < simplex.size(); ++i) {
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
                    fv[i] = gap_at(simplex[i]);
                }
            }
        }
    }

    // Coordinate polish with bisection-style bracket shrinking.
    Vec best = simplex[0];
    double bracket = 0.2 * opt.search_radius;
    for (int round = 0; round < 6 && gap_at(best) > opt.gap_tol * 0.01; ++round) {
        for (int i = 0; i < dim; ++i) {
            Vec probe = best;
            const double x = detail::golden_min(
                [&](double t) {
                    probe(i) = t;
                    return gap_at(probe);
                },
                best(i) - bracket, best(i) + bracket, 1e-13);
            probe(i) = x;
            if (gap_at(probe) <= gap_at(best)) best = probe;
        }
        bracket *= 0.25;
    }

    const CorankTwoStructure s = eval_family(f, best.tail(f.param_dim));
    const SpectralData sd = eigen_moduli(pencil(s, best(0)).matrix);
    const double gap = sd.moduli[0] - sd.moduli[1];
    const double scale = 1.0 + sd.moduli[0];
    if (gap > std::max(opt.gap_tol, 1e-12 * scale)) {
        throw NoResonance("resonance_locate: gap stays above threshold in the search region (best " +
                          std::to_string(gap) + ")");
    }
    if (sd.moduli.size() >= 3 && sd.moduli[1] - sd.moduli[2] <= opt.triple_tol * scale) {
        throw TripleDetected("resonance_locate: third modulus collides as well");
    }

    ResonancePoint out;
    out.theta = best(0);
    out.xi = best.tail(f.param_dim);
    out.gap = gap;
    out.top_modulus = sd.moduli[0];
    out.top_multiplicity = multiplicity_at_top(pencil(s, best(0)).matrix, 1e-8 * scale);
    return out;
}

// ---------------------------------------------------------------------------
// Versal coordinates along a family and the rank of their tangent map.

// Pencil matrix at z = (theta, xi), r = 1.
inline SkewMatrix family_pencil_matrix(const StructureFamily& f, double theta, const Vec& xi) {
    return pencil(eval_family(f, xi), theta).matrix;
}

// Versal transversal coordinate q at z, in the gauge fixed by ref_frame.
inline Vec3 family_versal_q(const StructureFamily& f, double theta, const Vec& xi,
                            const Mat& ref_frame) {
    return versal_extract(family_pencil_matrix(f, theta, xi), ref_frame).q;
}

struct RankReport {
    Mat jacobian;                        // 3 x (1 + param_dim)
    std::vector<double> singular_values; // descending
    int rank = 0;
    bool property_r = false; // rank == 3
};

// Finite-difference Jacobian of z -> q(z) at z = (theta, xi); the gauge is
// threaded from the base point so the stencil sees one smooth branch.
inline RankReport versal_rank_check(const StructureFamily& f, double theta, const Vec& xi,
                                    double h = 1e-4) {
    const Mat ref = eigen_moduli(family_pencil_matrix(f, theta, xi)).block_frame;
    const int dim = 1 + f.param_dim;
    Mat jac(3, dim);
    for (int i = 0; i < dim; ++i) {
        double tp = theta, tm = theta;
        Vec xp = xi, xm = xi;
        if (i == 0) {
            tp += h;
            tm -= h;
        } else {
            xp(i - 1) += h;
            xm(i - 1) -= h;
        }
        jac.col(i) = (family_versal_q(f, tp, xp, ref) - family_versal_q(f, tm, xm, ref)) / (2.0 * h);
    }
    Eigen::JacobiSVD<Mat> svd(jac);
    RankReport out;
    out.jacobian = jac;
    for (int i = 0; i < svd.singularValues().size(); ++i) {
        out.singular_values.push_back(svd.singularValues()(i));
    }
    const double smax = out.singular_values.empty() ? 0.0 : out.singular_values[0];
    for (double sv : out.singular_values) {
        if (sv > 1e-6 * smax) ++out.rank;
    }
    out.property_r = (out.rank == 3);
    return out;
}

} // namespace nilgeo
