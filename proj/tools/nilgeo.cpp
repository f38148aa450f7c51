// nilgeo command-line tool: spectra, cut times, geodesics, Jacobians, unit
// ball volumes, density fields, resonance location, versal rank checks,
// regularity probes and orbit-codimension reports for corank-2 step-2
// structures.
//
// Exit codes: 0 success, 2 configuration error, 3 input parse error,
// 4 numerical target unmet, 5 precondition violated.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nilgeo/probe.hpp"
#include "nilgeo/report.hpp"
#include "nilgeo/version.hpp"

using json = nlohmann::json;
using namespace nilgeo;

namespace {

struct GlobalConfig {
    std::string output_dir = "nilgeo-out";
    std::string format = "both"; // table | doc | both
    std::string family_path;
    std::string builtin;
    std::string xi_text;
    std::uint64_t seed = 20240809ull;
    int jobs = 1;
    QuadratureSpec quad;
    std::string ball_scheme = "auto";
};

Vec parse_vector(const std::string& text, int expected_dim, const std::string& what) {
    std::vector<double> vals;
    if (!text.empty()) {
        std::istringstream in(text);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0') {
                throw ConfigError(what + ": bad number '" + tok + "'");
            }
            vals.push_back(v);
        }
    }
    if (vals.empty()) return Vec::Zero(expected_dim);
    if (static_cast<int>(vals.size()) != expected_dim) {
        throw ConfigError(what + ": expected " + std::to_string(expected_dim) + " components, got " +
                          std::to_string(vals.size()));
    }
    Vec out(expected_dim);
    for (int i = 0; i < expected_dim; ++i) out(i) = vals[static_cast<std::size_t>(i)];
    return out;
}

StructureFamily load_input_family(const GlobalConfig& cfg) {
    if (!cfg.builtin.empty() && !cfg.family_path.empty()) {
        throw ConfigError("give either --builtin or --family, not both");
    }
    if (!cfg.builtin.empty()) return builtin_family(cfg.builtin);
    if (!cfg.family_path.empty()) return load_family(cfg.family_path);
    throw ConfigError("an input family is required (--builtin or --family)");
}

QuadratureSpec resolve_quad(const GlobalConfig& cfg) {
    QuadratureSpec q = cfg.quad;
    q.seed = cfg.seed;
    q.jobs = cfg.jobs;
    if (cfg.ball_scheme == "auto") {
        q.ball_scheme = BallScheme::automatic;
    } else if (cfg.ball_scheme == "product") {
        q.ball_scheme = BallScheme::product;
    } else if (cfg.ball_scheme == "qmc") {
        q.ball_scheme = BallScheme::qmc;
    } else {
        throw ConfigError("unknown ball scheme '" + cfg.ball_scheme + "'");
    }
    q.validate();
    return q;
}

json quad_json(const QuadratureSpec& q) {
    return json{{"theta_nodes", q.theta_nodes},
                {"r_nodes", q.r_nodes},
                {"ball_scheme", static_cast<int>(q.ball_scheme)},
                {"sphere_degree", q.sphere_degree},
                {"radial_nodes", q.radial_nodes},
                {"qmc_points", q.qmc_points},
                {"target_rel_err", q.target_rel_err},
                {"refine_cap", q.refine_cap},
                {"seed", q.seed},
                {"jobs", q.jobs}};
}

// Collected artifacts of one run, flushed with a manifest.
class ArtifactSink {
public:
    ArtifactSink(const GlobalConfig& cfg, std::string command)
        : cfg_(cfg), command_(std::move(command)) {
        std::filesystem::create_directories(cfg.output_dir);
    }

    void add_table(const std::string& stem, const Table& table, json doc) {
        if (cfg_.format == "table" || cfg_.format == "both") {
            write(stem + ".csv", table.to_csv());
        }
        if (cfg_.format == "doc" || cfg_.format == "both") {
            doc["format"] = kReportFormat;
            write(stem + ".json", doc.dump(2) + "\n");
        }
    }

    void add_raw(const std::string& name, const std::string& content) { write(name, content); }

    void finish(const json& config_echo) {
        json manifest;
        manifest["format"] = kManifestFormat;
        manifest["version"] = kVersion;
        manifest["command"] = command_;
        manifest["config"] = config_echo;
        manifest["artifacts"] = json::array();
        for (const auto& [name, hash, bytes] : entries_) {
            manifest["artifacts"].push_back(
                {{"path", name}, {"fnv1a64", hash}, {"bytes", bytes}});
        }
        write_file((std::filesystem::path(cfg_.output_dir) / "manifest.json").string(),
                   manifest.dump(2) + "\n");
    }

private:
    void write(const std::string& name, const std::string& content) {
        write_file((std::filesystem::path(cfg_.output_dir) / name).string(), content);
        entries_.emplace_back(name, hash_hex(content_hash(content)), content.size());
    }

    const GlobalConfig& cfg_;
    std::string command_;
    std::vector<std::tuple<std::string, std::string, std::size_t>> entries_;
};

json family_echo(const GlobalConfig& cfg) {
    json j;
    if (!cfg.builtin.empty()) j["builtin"] = cfg.builtin;
    if (!cfg.family_path.empty()) j["family"] = cfg.family_path;
    if (!cfg.xi_text.empty()) j["xi"] = cfg.xi_text;
    j["seed"] = cfg.seed;
    j["jobs"] = cfg.jobs;
    j["format"] = cfg.format;
    return j;
}

// ---------------------------------------------------------------------------

int cmd_spectrum(const GlobalConfig& cfg, int theta_grid) {
    const StructureFamily fam = load_input_family(cfg);
    const Vec xi = parse_vector(cfg.xi_text, fam.param_dim, "--xi");
    const CorankTwoStructure s = eval_family(fam, xi);

    std::vector<std::string> cols{"theta"};
    for (int i = 0; i < s.p() / 2; ++i) cols.push_back("modulus_" + std::to_string(i));
    cols.push_back("gap");
    cols.push_back("top_multiplicity");
    Table table(cols);
    json rows = json::array();
    for (int k = 0; k < theta_grid; ++k) {
        const double theta = 2.0 * M_PI * k / theta_grid;
        const SkewMatrix m = pencil(s, theta).matrix;
        const SpectralData sd = eigen_moduli(m);
        table.begin_row().cell(theta);
        json row{{"theta", theta}};
        json moduli = json::array();
        for (double w : sd.moduli) {
            table.cell(w);
            moduli.push_back(w);
        }
        const int mult = sd.multiplicities.empty() ? 0 : sd.multiplicities.front();
        table.cell(std::isfinite(sd.gap) ? sd.gap : -1.0).cell(mult);
        row["moduli"] = moduli;
        row["gap"] = sd.gap == std::numeric_limits<double>::infinity() ? -1.0 : sd.gap;
        row["top_multiplicity"] = mult;
        rows.push_back(row);
    }
    ArtifactSink sink(cfg, "spectrum");
    sink.add_table("spectrum", table, json{{"rows", rows}});
    json echo = family_echo(cfg);
    echo["theta_grid"] = theta_grid;
    sink.finish(echo);
    std::cout << "spectrum: " << theta_grid << " angles, p = " << s.p() << "\n";
    return 0;
}

int cmd_cut_time(const GlobalConfig& cfg, int theta_grid, double r) {
    const StructureFamily fam = load_input_family(cfg);
    const Vec xi = parse_vector(cfg.xi_text, fam.param_dim, "--xi");
    const CorankTwoStructure s = eval_family(fam, xi);

    Table table({"theta", "max_modulus", "t_cut", "cut_is_conjugate"});
    json rows = json::array();
    for (int k = 0; k < theta_grid; ++k) {
        const double theta = 2.0 * M_PI * k / theta_grid;
        const double m = max_modulus(pencil(s, theta, r).matrix);
        const double tc = cut_time(s, theta, r);
        const bool conj = cut_is_conjugate(s, theta, r, 1e-9);
        table.begin_row().cell(theta).cell(m).cell(tc).cell(conj ? 1 : 0);
        rows.push_back({{"theta", theta}, {"max_modulus", m}, {"t_cut", tc}, {"conjugate", conj}});
    }
    ArtifactSink sink(cfg, "cut-time");
    sink.add_table("cut_time", table, json{{"r", r}, {"rows", rows}});
    json echo = family_echo(cfg);
    echo["theta_grid"] = theta_grid;
    echo["r"] = r;
    sink.finish(echo);
    std::cout << "cut-time: " << theta_grid << " angles at r = " << r << "\n";
    return 0;
}

int cmd_geodesic(const GlobalConfig& cfg, double theta, double r, double t_end, int samples,
                 const std::string& px0_text) {
    const StructureFamily fam = load_input_family(cfg);
    const Vec xi = parse_vector(cfg.xi_text, fam.param_dim, "--xi");
    const CorankTwoStructure s = eval_family(fam, xi);
    Vec px0 = parse_vector(px0_text, s.p(), "--px0");
    if (px0.norm() == 0.0) px0 = Vec::Unit(s.p(), 0);

    std::vector<std::string> cols{"t"};
    for (int i = 0; i < s.p(); ++i) cols.push_back("x_" + std::to_string(i));
    cols.push_back("y_1");
    cols.push_back("y_2");
    cols.push_back("u_norm");
    Table table(cols);
    json rows = json::array();
    for (int k = 0; k <= samples; ++k) {
        const double t = t_end * k / samples;
        const GeodesicState g = geodesic(s, Covector{px0, theta, r}, t);
        table.begin_row().cell(t);
        json xs = json::array();
        for (int i = 0; i < s.p(); ++i) {
            table.cell(g.x(i));
            xs.push_back(g.x(i));
        }
        table.cell(g.y(0)).cell(g.y(1)).cell(g.u.norm());
        rows.push_back({{"t", t}, {"x", xs}, {"y", {g.y(0), g.y(1)}}, {"u_norm", g.u.norm()}});
    }
    ArtifactSink sink(cfg, "geodesic");
    sink.add_table("geodesic", table, json{{"rows", rows}});
    json echo = family_echo(cfg);
    echo["theta"] = theta;
    echo["r"] = r;
    echo["time"] = t_end;
    echo["samples"] = samples;
    echo["px0"] = px0_text;
    sink.finish(echo);
    std::cout << "geodesic: " << samples + 1 << " samples to t = " << t_end
              << ", cut time " << cut_time(s, theta, std::max(r, 1e-300)) << "\n";
    return 0;
}

int cmd_jacobian(const GlobalConfig& cfg, double theta, double r, const std::string& px0_text,
                 bool fd_check) {
    const StructureFamily fam = load_input_family(cfg);
    const Vec xi = parse_vector(cfg.xi_text, fam.param_dim, "--xi");
    const CorankTwoStructure s = eval_family(fam, xi);
    Vec px0 = parse_vector(px0_text, s.p(), "--px0");
    if (px0.norm() == 0.0) px0 = 0.7 * Vec::Unit(s.p(), 0);

    const JacobianResult jr = exp_jacobian(s, Covector{px0, theta, r});
    Table table({"quantity", "value"});
    table.begin_row().cell(std::string("det")).cell(jr.det);
    json doc{{"det", jr.det}};
    json svs = json::array();
    for (int i = 0; i < jr.singular_values.size(); ++i) {
        table.begin_row().cell("sigma_" + std::to_string(i)).cell(jr.singular_values(i));
        svs.push_back(jr.singular_values(i));
    }
    doc["singular_values"] = svs;
    if (fd_check) {
        const double fd = exp_jacobian_fd(s, Covector{px0, theta, r});
        table.begin_row().cell(std::string("det_fd")).cell(fd);
        doc["det_fd"] = fd;
    }
    ArtifactSink sink(cfg, "jacobian");
    sink.add_table("jacobian", table, doc);
    json echo = family_echo(cfg);
    echo["theta"] = theta;
    echo["r"] = r;
    echo["px0"] = px0_text;
    echo["fd_check"] = fd_check;
    sink.finish(echo);
    std::cout << "jacobian: det = " << format_double(jr.det) << "\n";
    return 0;
}

int cmd_volume(const GlobalConfig& cfg) {
    const StructureFamily fam = load_input_family(cfg);
    const Vec xi = parse_vector(cfg.xi_text, fam.param_dim, "--xi");
    const CorankTwoStructure s = eval_family(fam, xi);
    const QuadratureSpec quad = resolve_quad(cfg);
    const DensityReport rep = ball_volume(s, quad);

    Table summary({"volume", "rel_err_estimate", "Q", "f_SP", "min_gap", "sign_mixed_slices"});
    summary.begin_row()
        .cell(rep.volume)
        .cell(rep.rel_err_estimate)
        .cell(rep.q)
        .cell(rep.f_sp)
        .cell(rep.min_gap_over_theta)
        .cell(rep.sign_mixed_slices);
    Table slices({"theta", "cut_radius", "W", "W_err"});
    json slice_rows = json::array();
    for (const auto& sr : rep.per_theta) {
        slices.begin_row().cell(sr.theta).cell(sr.cut_radius).cell(sr.value).cell(sr.err_estimate);
        slice_rows.push_back({{"theta", sr.theta},
                              {"cut_radius", sr.cut_radius},
                              {"W", sr.value},
                              {"err", sr.err_estimate}});
    }
    ArtifactSink sink(cfg, "volume");
    sink.add_table("volume", summary,
                   json{{"volume", rep.volume},
                        {"rel_err_estimate", rep.rel_err_estimate},
                        {"Q", rep.q},
                        {"f_SP", rep.f_sp},
                        {"min_gap", rep.min_gap_over_theta}});
    sink.add_table("volume_slices", slices, json{{"rows", slice_rows}});
    json echo = family_echo(cfg);
    echo["quad"] = quad_json(quad);
    sink.finish(echo);
    std::cout << "volume: V = " << format_double(rep.volume) << " (rel err "
              << format_double(rep.rel_err_estimate) << "), f_SP = " << format_double(rep.f_sp)
              << "\n";
    return 0;
}

int cmd_density_field(const GlobalConfig& cfg, const std::string& grid_file,
                      const std::string& segment, int segment_n) {
    const StructureFamily fam = load_input_family(cfg);
    const QuadratureSpec quad = resolve_quad(cfg);

    std::vector<Vec> grid;
    if (!grid_file.empty()) {
        std::ifstream in(grid_file);
        if (!in) throw ParseError("cannot open grid file " + grid_file);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            try {
                grid.push_back(parse_vector(line, fam.param_dim, "grid line"));
            } catch (const ConfigError& e) {
                throw ParseError(e.what(), lineno);
            }
        }
    } else if (!segment.empty()) {
        const auto colon = segment.find(':');
        if (colon == std::string::npos) throw ConfigError("--segment needs 'lo,..:hi,..'");
        const Vec lo = parse_vector(segment.substr(0, colon), fam.param_dim, "--segment lo");
        const Vec hi = parse_vector(segment.substr(colon + 1), fam.param_dim, "--segment hi");
        for (int k = 0; k < segment_n; ++k) {
            const double t = segment_n == 1 ? 0.0 : static_cast<double>(k) / (segment_n - 1);
            grid.push_back(lo + t * (hi - lo));
        }
    } else {
        throw ConfigError("density-field needs --grid-file or --segment");
    }

    const char* cache_env = std::getenv("NILGEO_CACHE_DIR");
    const std::string cache_dir = cache_env ? cache_env : "";
    const auto field = density_field(fam, grid, quad, cache_dir);

    std::vector<std::string> cols;
    for (int i = 0; i < fam.param_dim; ++i) cols.push_back("xi_" + std::to_string(i));
    for (const char* c : {"volume", "rel_err", "f_SP", "min_gap", "status"}) cols.push_back(c);
    Table table(cols);
    json rows = json::array();
    int failures = 0;
    for (const auto& fp : field) {
        table.begin_row();
        json row;
        json xi = json::array();
        for (int i = 0; i < fp.xi.size(); ++i) {
            table.cell(fp.xi(i));
            xi.push_back(fp.xi(i));
        }
        row["xi"] = xi;
        if (fp.ok) {
            table.cell(fp.report.volume)
                .cell(fp.report.rel_err_estimate)
                .cell(fp.report.f_sp)
                .cell(fp.report.min_gap_over_theta)
                .cell(std::string(fp.from_cache ? "cached" : "ok"));
            row["volume"] = fp.report.volume;
            row["rel_err"] = fp.report.rel_err_estimate;
            row["f_SP"] = fp.report.f_sp;
            row["min_gap"] = fp.report.min_gap_over_theta;
            row["status"] = fp.from_cache ? "cached" : "ok";
        } else {
            table.cell(0.0).cell(0.0).cell(0.0).cell(0.0).cell(std::string("error"));
            row["status"] = "error";
            row["error"] = fp.error;
            ++failures;
        }
        rows.push_back(row);
    }
    ArtifactSink sink(cfg, "density-field");
    sink.add_table("density_field", table, json{{"rows", rows}});
    json echo = family_echo(cfg);
    echo["quad"] = quad_json(quad);
    if (!grid_file.empty()) echo["grid_file"] = grid_file;
    if (!segment.empty()) {
        echo["segment"] = segment;
        echo["segment_n"] = segment_n;
    }
    sink.finish(echo);
    std::cout << "density-field: " << field.size() << " points, " << failures << " failures\n";
    return 0;
}

int cmd_resonance(const GlobalConfig& cfg, double seed_theta, double radius) {
    const StructureFamily fam = load_input_family(cfg);
    const Vec seed_xi = parse_vector(cfg.xi_text, fam.param_dim, "--xi");
    ResonanceOptions opt;
    opt.search_radius = radius;
    const ResonancePoint z = resonance_locate(fam, seed_theta, seed_xi, opt);

    Table table({"theta", "gap", "top_modulus", "top_multiplicity"});
    table.begin_row().cell(z.theta).cell(z.gap).cell(z.top_modulus).cell(z.top_multiplicity);
    json doc{{"theta", z.theta},
             {"gap", z.gap},
             {"top_modulus", z.top_modulus},
             {"top_multiplicity", z.top_multiplicity}};
    json xi = json::array();
    for (int i = 0; i < z.xi.size(); ++i) xi.push_back(z.xi(i));
    doc["xi"] = xi;
    ArtifactSink sink(cfg, "resonance");
    sink.add_table("resonance", table, doc);
    json echo = family_echo(cfg);
    echo["seed_theta"] = seed_theta;
    echo["radius"] = radius;
    sink.finish(echo);
    std::cout << "resonance: theta = " << format_double(z.theta) << ", gap = "
              << format_double(z.gap) << ", multiplicity " << z.top_multiplicity << "\n";
    return 0;
}

int cmd_versal(const GlobalConfig& cfg, double theta, double h) {
    const StructureFamily fam = load_input_family(cfg);
    const Vec xi = parse_vector(cfg.xi_text, fam.param_dim, "--xi");

    const SkewMatrix a = family_pencil_matrix(fam, theta, xi);
    const VersalCoordinates vc = versal_extract(a, eigen_moduli(a).block_frame);
    const RankReport rank = versal_rank_check(fam, theta, xi, h);

    Table table({"lambda", "q_norm", "rank", "property_R"});
    table.begin_row().cell(vc.lambda).cell(vc.q.norm()).cell(rank.rank).cell(rank.property_r ? 1 : 0);
    json doc{{"lambda", vc.lambda}, {"q_norm", vc.q.norm()}, {"rank", rank.rank},
             {"property_R", rank.property_r}};
    json svs = json::array();
    for (double sv : rank.singular_values) svs.push_back(sv);
    doc["tangent_singular_values"] = svs;
    json delta = json::array();
    for (double w : vc.delta_moduli) delta.push_back(w);
    doc["delta_moduli"] = delta;

    ArtifactSink sink(cfg, "versal");
    sink.add_table("versal", table, doc);
    json echo = family_echo(cfg);
    echo["theta"] = theta;
    echo["h"] = h;
    sink.finish(echo);
    std::cout << "versal: lambda = " << format_double(vc.lambda) << ", |q| = "
              << format_double(vc.q.norm()) << ", rank(Tq) = " << rank.rank << "\n";
    return 0;
}

int cmd_probe(const GlobalConfig& cfg, const std::string& op, double theta,
              const std::string& dir_text, const std::string& observable, double halfwidth,
              int samples, const std::string& mode, bool plot) {
    const StructureFamily fam = load_input_family(cfg);
    const Vec xi = parse_vector(cfg.xi_text, fam.param_dim, "--xi");
    const QuadratureSpec quad = resolve_quad(cfg);
    ArtifactSink sink(cfg, "probe");
    json echo = family_echo(cfg);
    echo["op"] = op;
    echo["theta"] = theta;
    echo["quad"] = quad_json(quad);

    if (op == "scan") {
        const Vec dir = parse_vector(dir_text, 1 + fam.param_dim, "--dir");
        const ScanObservable obs = observable == "fsp" ? ScanObservable::density_f_sp
                                                       : ScanObservable::angular_slice_w;
        const RegularityReport rep =
            regularity_scan(fam, theta, xi, dir, default_scan_steps(), quad, obs);
        Table table({"h", "d1_left", "d1_right", "c1_defect", "floor1", "d2_left", "d2_right",
                     "c2_defect", "floor2"});
        json rows = json::array();
        for (std::size_t i = 0; i < rep.h_seq.size(); ++i) {
            table.begin_row()
                .cell(rep.h_seq[i])
                .cell(rep.d1_left[i])
                .cell(rep.d1_right[i])
                .cell(rep.c1_defect[i])
                .cell(rep.floor1[i])
                .cell(rep.d2_left[i])
                .cell(rep.d2_right[i])
                .cell(rep.c2_defect[i])
                .cell(rep.floor2[i]);
            rows.push_back({{"h", rep.h_seq[i]},
                            {"c1_defect", rep.c1_defect[i]},
                            {"c2_defect", rep.c2_defect[i]},
                            {"floor1", rep.floor1[i]},
                            {"floor2", rep.floor2[i]}});
        }
        json doc{{"rows", rows},
                 {"c1", to_string(rep.c1)},
                 {"c2", to_string(rep.c2)},
                 {"error_floor", rep.error_floor}};
        sink.add_table("probe_scan", table, doc);
        if (plot) {
            PlotSeries v{"value", {}, {}};
            for (std::size_t i = 0; i < rep.h_seq.size(); ++i) {
                v.x.push_back(rep.h_seq[i]);
                v.y.push_back(rep.values_right1[i]);
            }
            PlotSeries d1{"c1 defect", rep.h_seq, rep.c1_defect};
            PlotSeries d2{"c2 defect", rep.h_seq, rep.c2_defect};
            PlotSeries f1{"floor1", rep.h_seq, rep.floor1};
            sink.add_raw("probe_scan.svg",
                         svg_line_plot("one-sided defects vs step", {d1, d2, f1, v}, true, true));
        }
        echo["dir"] = dir_text;
        echo["observable"] = observable;
        sink.finish(echo);
        std::cout << "probe scan: C1 " << to_string(rep.c1) << ", C2 " << to_string(rep.c2)
                  << " (floor " << format_double(rep.error_floor) << ")\n";
        return 0;
    }
    if (op == "derivative") {
        const Vec dir = parse_vector(dir_text, 1 + fam.param_dim, "--dir");
        const DerivativeCheck chk = derivative_formula_check(fam, theta, xi, dir, 1e-3, quad);
        Table table({"fd", "formula", "f_at_cut", "dA_dir", "defect", "agrees"});
        table.begin_row()
            .cell(chk.fd)
            .cell(chk.formula)
            .cell(chk.f_at_cut)
            .cell(chk.da_dir)
            .cell(chk.defect)
            .cell(chk.agrees ? 1 : 0);
        sink.add_table("probe_derivative", table,
                       json{{"fd", chk.fd},
                            {"formula", chk.formula},
                            {"f_at_cut", chk.f_at_cut},
                            {"defect", chk.defect},
                            {"agrees", chk.agrees}});
        echo["dir"] = dir_text;
        sink.finish(echo);
        std::cout << "probe derivative: defect = " << format_double(chk.defect)
                  << (chk.agrees ? " (agrees)" : " (DISAGREES)") << "\n";
        return 0;
    }
    if (op == "lipschitz") {
        const LipschitzEstimate est = lipschitz_check(fam, theta, xi, halfwidth, samples, cfg.seed);
        Table table({"constant", "growth", "samples"});
        table.begin_row().cell(est.constant).cell(est.growth).cell(est.samples);
        sink.add_table("probe_lipschitz", table,
                       json{{"constant", est.constant}, {"growth", est.growth}});
        echo["halfwidth"] = halfwidth;
        echo["samples"] = samples;
        sink.finish(echo);
        std::cout << "probe lipschitz: constant = " << format_double(est.constant) << "\n";
        return 0;
    }
    if (op == "vanishing") {
        const Vec dir = parse_vector(dir_text, 1 + fam.param_dim, "--dir");
        const std::vector<double> hs{0.15, 0.08, 0.04, 0.02, 0.01, 0.005};
        const VanishingMode vm =
            mode == "j" ? VanishingMode::jacobian_j : VanishingMode::fiber_density_f;
        const VanishingFit fit = quadratic_vanishing_check(fam, theta, xi, dir, hs, quad, vm);
        Table table({"h", "q_norm", "magnitude"});
        for (std::size_t i = 0; i < fit.offsets.size(); ++i) {
            table.begin_row().cell(fit.offsets[i]).cell(fit.q_norm[i]).cell(fit.magnitude[i]);
        }
        sink.add_table("probe_vanishing", table,
                       json{{"exponent", fit.exponent}, {"fit_valid", fit.fit_valid}});
        if (plot) {
            sink.add_raw("probe_vanishing.svg",
                         svg_line_plot("boundary density vs transversal coordinate",
                                       {{"|f|", fit.q_norm, fit.magnitude}}, true, true));
        }
        echo["dir"] = dir_text;
        echo["mode"] = mode;
        sink.finish(echo);
        std::cout << "probe vanishing: exponent = " << format_double(fit.exponent)
                  << (fit.fit_valid ? "" : " (fit rejected)") << "\n";
        return 0;
    }
    if (op == "rankdrop") {
        const CorankTwoStructure s = eval_family(fam, xi);
        const RankDropReport rep = rank_drop_check(s, theta, samples, cfg.seed);
        Table table({"cut_radius", "worst_second_smallest", "max_abs_det", "det_scale", "drop_two"});
        table.begin_row()
            .cell(rep.cut_radius)
            .cell(rep.worst_second_smallest)
            .cell(rep.max_abs_det)
            .cell(rep.det_scale)
            .cell(rep.drop_two ? 1 : 0);
        sink.add_table("probe_rankdrop", table,
                       json{{"cut_radius", rep.cut_radius},
                            {"worst_second_smallest", rep.worst_second_smallest},
                            {"drop_two", rep.drop_two}});
        echo["samples"] = samples;
        sink.finish(echo);
        std::cout << "probe rankdrop: drop_two = " << (rep.drop_two ? "yes" : "no")
                  << ", worst second-smallest ratio " << format_double(rep.worst_second_smallest)
                  << "\n";
        return 0;
    }
    throw ConfigError("unknown probe op '" + op + "'");
}

int cmd_codim_report(const GlobalConfig& cfg, int n) {
    const OrbitCodimReport rep = orbit_codimension_report(n);
    Table table({"model", "so_dim", "centralizer_dim", "orbit_dim", "family_dim", "codimension"});
    json rows = json::array();
    for (const auto& m : rep.models) {
        table.begin_row()
            .cell(m.model)
            .cell(m.so_dim)
            .cell(m.centralizer_dim)
            .cell(m.orbit_dim)
            .cell(m.family_dim)
            .cell(m.codimension);
        rows.push_back({{"model", m.model},
                        {"so_dim", m.so_dim},
                        {"centralizer_dim", m.centralizer_dim},
                        {"orbit_dim", m.orbit_dim},
                        {"family_dim", m.family_dim},
                        {"codimension", m.codimension}});
        std::cout << m.model << ": so(" << 2 * n << ") dim " << m.so_dim << ", centralizer dim "
                  << m.centralizer_dim << ", codimension " << m.codimension << "\n";
    }
    ArtifactSink sink(cfg, "codim-report");
    sink.add_table("codim_report", table, json{{"n", n}, {"rows", rows}});
    json echo = family_echo(cfg);
    echo["n"] = n;
    sink.finish(echo);
    return 0;
}

int cmd_scaffold(const GlobalConfig& cfg) {
    ArtifactSink sink(cfg, "scaffold");
    for (const std::string& name : builtin_family_names()) {
        sink.add_raw(name + ".family", save_family_string(builtin_family(name)));
    }
    sink.finish(family_echo(cfg));
    std::cout << "scaffold: wrote " << builtin_family_names().size() << " family files to "
              << cfg.output_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nilgeo: nilpotent-approximation geodesics, cut times, unit-ball volumes and "
                 "spherical-Hausdorff density diagnostics for corank-2 step-2 structures"};
    app.require_subcommand(1);
    app.fallthrough(true);
    app.failure_message(CLI::FailureMessage::simple);

    GlobalConfig cfg;
    app.add_option("--output-dir", cfg.output_dir, "artifact directory");
    app.add_option("--format", cfg.format, "table | doc | both")
        ->check(CLI::IsMember({"table", "doc", "both"}));
    app.add_option("--family", cfg.family_path, "family file (nilgeo-family/1)");
    app.add_option("--builtin", cfg.builtin, "built-in family name");
    app.add_option("--xi", cfg.xi_text, "parameter point, comma-separated");
    app.add_option("--seed", cfg.seed, "seed for randomized schemes");
    app.add_option("--jobs", cfg.jobs, "worker threads");
    app.add_option("--theta-nodes", cfg.quad.theta_nodes, "periodic rule nodes");
    app.add_option("--r-nodes", cfg.quad.r_nodes, "radial Gauss nodes per angle");
    app.add_option("--ball-scheme", cfg.ball_scheme, "auto | product | qmc");
    app.add_option("--sphere-degree", cfg.quad.sphere_degree, "product rule sphere degree");
    app.add_option("--radial-nodes", cfg.quad.radial_nodes, "product rule radial nodes");
    app.add_option("--qmc-n", cfg.quad.qmc_points, "qmc sample count");
    app.add_option("--target-rel-err", cfg.quad.target_rel_err, "volume accuracy target");
    app.add_option("--refine-cap", cfg.quad.refine_cap, "extra refinement rounds");

    auto* sp_spectrum = app.add_subcommand("spectrum", "pencil moduli over a theta grid");
    int theta_grid = 64;
    sp_spectrum->add_option("--theta-grid", theta_grid, "number of angles");

    auto* sp_cut = app.add_subcommand("cut-time", "cut times over a theta grid");
    double cut_r = 1.0;
    sp_cut->add_option("--theta-grid", theta_grid, "number of angles");
    sp_cut->add_option("--r", cut_r, "covector radius");

    auto* sp_geo = app.add_subcommand("geodesic", "sample one geodesic");
    double g_theta = 0.0, g_r = 1.0, g_time = 1.0;
    int g_samples = 32;
    std::string px0_text;
    sp_geo->add_option("--theta", g_theta);
    sp_geo->add_option("--r", g_r);
    sp_geo->add_option("--time", g_time);
    sp_geo->add_option("--samples", g_samples);
    sp_geo->add_option("--px0", px0_text, "initial horizontal covector");

    auto* sp_jac = app.add_subcommand("jacobian", "exponential-map Jacobian at a covector");
    double j_theta = 0.0, j_r = 1.0;
    bool j_fd = false;
    std::string j_px0;
    sp_jac->add_option("--theta", j_theta);
    sp_jac->add_option("--r", j_r);
    sp_jac->add_option("--px0", j_px0);
    sp_jac->add_flag("--fd-check", j_fd, "also compute the finite-difference determinant");

    auto* sp_vol = app.add_subcommand("volume", "unit-ball Popp volume and density");

    auto* sp_field = app.add_subcommand("density-field", "density over a parameter grid");
    std::string grid_file, segment;
    int segment_n = 11;
    sp_field->add_option("--grid-file", grid_file, "one comma-separated point per line");
    sp_field->add_option("--segment", segment, "'lo,..:hi,..' straight segment");
    sp_field->add_option("--segment-n", segment_n, "points on the segment");

    auto* sp_res = app.add_subcommand("resonance", "locate an eigenvalue collision");
    double seed_theta = 0.0, res_radius = 0.5;
    sp_res->add_option("--seed-theta", seed_theta);
    sp_res->add_option("--radius", res_radius, "search box half-width");

    auto* sp_versal = app.add_subcommand("versal", "versal coordinates and property (R) rank");
    double v_theta = 0.0, v_h = 1e-4;
    sp_versal->add_option("--theta", v_theta);
    sp_versal->add_option("--step", v_h, "finite-difference step");

    auto* sp_probe = app.add_subcommand("probe", "regularity diagnostics");
    std::string probe_op = "scan", dir_text, observable = "w", vanish_mode = "f";
    double p_theta = 0.0, halfwidth = 0.3;
    int p_samples = 50;
    bool plot = false;
    sp_probe->add_option("--op", probe_op, "scan | derivative | lipschitz | vanishing | rankdrop")
        ->check(CLI::IsMember({"scan", "derivative", "lipschitz", "vanishing", "rankdrop"}));
    sp_probe->add_option("--theta", p_theta);
    sp_probe->add_option("--dir", dir_text, "direction in (theta, xi) space");
    sp_probe->add_option("--observable", observable, "w | fsp")
        ->check(CLI::IsMember({"w", "fsp"}));
    sp_probe->add_option("--halfwidth", halfwidth);
    sp_probe->add_option("--samples", p_samples);
    sp_probe->add_option("--mode", vanish_mode, "f | j")->check(CLI::IsMember({"f", "j"}));
    sp_probe->add_flag("--plot", plot, "emit an SVG plot");

    auto* sp_codim = app.add_subcommand("codim-report", "orbit codimensions in so(2n)");
    int codim_n = 3;
    sp_codim->add_option("--n", codim_n, "half-dimension, 2..6");

    auto* sp_scaffold = app.add_subcommand("scaffold", "export built-in family files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    try {
        if (sp_spectrum->parsed()) return cmd_spectrum(cfg, theta_grid);
        if (sp_cut->parsed()) return cmd_cut_time(cfg, theta_grid, cut_r);
        if (sp_geo->parsed()) return cmd_geodesic(cfg, g_theta, g_r, g_time, g_samples, px0_text);
        if (sp_jac->parsed()) return cmd_jacobian(cfg, j_theta, j_r, j_px0, j_fd);
        if (sp_vol->parsed()) return cmd_volume(cfg);
        if (sp_field->parsed()) return cmd_density_field(cfg, grid_file, segment, segment_n);
        if (sp_res->parsed()) return cmd_resonance(cfg, seed_theta, res_radius);
        if (sp_versal->parsed()) return cmd_versal(cfg, v_theta, v_h);
        if (sp_probe->parsed()) {
            return cmd_probe(cfg, probe_op, p_theta, dir_text, observable, halfwidth, p_samples,
                             vanish_mode, plot);
        }
        if (sp_codim->parsed()) return cmd_codim_report(cfg, codim_n);
        if (sp_scaffold->parsed()) return cmd_scaffold(cfg);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 3;
    } catch (const ErrTargetUnmet& e) {
        std::cerr << "numerical target unmet: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "precondition violated: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
