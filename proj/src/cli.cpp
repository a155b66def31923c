#include "damm/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "damm/circle_case.hpp"
#include "damm/csv.hpp"
#include "damm/reference.hpp"
#include "damm/vlasov_poisson.hpp"

namespace damm::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Kind { Real, Integer, Text, RealList, IntegerList };

struct Key {
    std::string name;
    Kind kind;
    std::string help;
};

enum class PresetFamily { None, Circle, VP };

struct Preset {
    PresetFamily family;
    json values;
};

const std::map<std::string, Preset>& presets() {
    static const std::map<std::string, Preset> table = {
        {"circle-eps1",
         {PresetFamily::Circle,
          {{"eps", 1.0}, {"nx", 100}, {"ny", 100}, {"sigma", "dx2"}, {"dt", 0.01}, {"steps", 100}}}},
        {"circle-eps0",
         {PresetFamily::Circle,
          {{"eps", 0.0}, {"nx", 40}, {"ny", 40}, {"sigma", "dx2"}, {"dt", 0.01}, {"steps", 200}}}},
        {"weak-landau",
         {PresetFamily::VP,
          {{"k", 0.5}, {"gamma", 0.001}, {"eps", 1.0}, {"sigma", "scaled-dx2"}, {"dt", 0.01},
           {"final_time", 20.0}, {"velocity_cut", 10.0}, {"nx", 256}, {"nv", 256},
           {"initial", "landau"}, {"window", {0.0, 20.0}}, {"fit", "peaks"}}}},
        {"strong-landau",
         {PresetFamily::VP,
          {{"k", 0.3}, {"gamma", 0.3}, {"eps", 1.0}, {"sigma", "scaled-dx2"}, {"dt", 0.01},
           {"final_time", 60.0}, {"velocity_cut", 10.0}, {"nx", 256}, {"nv", 256},
           {"initial", "landau"}, {"window", {0.0, 15.0}}, {"fit", "peaks"}}}},
        {"two-stream",
         {PresetFamily::VP,
          {{"k", 0.2}, {"gamma", 0.001}, {"eps", 1.0}, {"sigma", "scaled-dx2"}, {"dt", 0.1},
           {"final_time", 50.0}, {"velocity_cut", 10.0}, {"nx", 256}, {"nv", 256},
           {"initial", "two-stream-bumps"}, {"window", {10.0, 25.0}}, {"fit", "linear"}}}},
        {"bgk",
         {PresetFamily::VP,
          {{"k", 0.5}, {"gamma", 0.05}, {"eps", 0.0}, {"sigma", "scaled-dx2"}, {"dt", 0.01},
           {"final_time", 0.5}, {"velocity_cut", 5.0}, {"nx", 256}, {"nv", 256},
           {"initial", "two-stream-v2"}}}},
    };
    return table;
}

struct Leaf {
    std::string group;
    std::string name;
    std::string description;
    PresetFamily family;
    std::vector<Key> keys;
    json defaults;
};

std::vector<Key> circle_keys() {
    return {
        {"eps", Kind::Real, "epsilon (>= 0)"},
        {"nx", Kind::Integer, "cells in x"},
        {"ny", Kind::Integer, "cells in y"},
        {"sigma", Kind::Text, "sigma policy: dx2, dx, scaled-dx2, fixed"},
        {"sigma_value", Kind::Real, "sigma for the fixed policy"},
        {"dt", Kind::Real, "time step"},
        {"steps", Kind::Integer, "number of time steps"},
        {"peak_x", Kind::Real, "initial peak centre x"},
        {"peak_y", Kind::Real, "initial peak centre y"},
        {"peak_width", Kind::Real, "initial peak width"},
        {"quadrature_points", Kind::Integer, "angular nodes of the limit solution"},
        {"linear_tol", Kind::Real, "relative residual of the stage solves"},
        {"linear_max_iter", Kind::Integer, "Krylov iteration cap"},
    };
}

json circle_defaults() {
    const CircleConfig c;
    return {{"eps", c.epsilon},
            {"nx", c.grid.cells_x},
            {"ny", c.grid.cells_y},
            {"sigma", to_string(c.sigma.kind)},
            {"sigma_value", c.sigma.value},
            {"dt", c.dt},
            {"steps", c.steps},
            {"peak_x", c.peak.center_x},
            {"peak_y", c.peak.center_y},
            {"peak_width", c.peak.width},
            {"quadrature_points", c.quadrature_points},
            {"linear_tol", c.linear_tol},
            {"linear_max_iter", c.linear_max_iter}};
}

std::vector<Key> vp_keys() {
    return {
        {"k", Kind::Real, "wave number"},
        {"gamma", Kind::Real, "perturbation amplitude"},
        {"eps", Kind::Real, "epsilon (>= 0)"},
        {"sigma", Kind::Text, "sigma policy: dx2, dx, scaled-dx2, fixed"},
        {"sigma_value", Kind::Real, "sigma for the fixed policy"},
        {"dt", Kind::Real, "time step"},
        {"final_time", Kind::Real, "final time (multiple of dt)"},
        {"velocity_cut", Kind::Real, "velocity half-width L_v"},
        {"nx", Kind::Integer, "cells in x"},
        {"nv", Kind::Integer, "cells in v"},
        {"initial", Kind::Text, "initial datum: landau, two-stream-bumps, two-stream-v2"},
        {"picard_tol", Kind::Real, "Picard stopping threshold"},
        {"picard_max", Kind::Integer, "Picard iterate cap"},
        {"linear_tol", Kind::Real, "relative residual of the stage solves"},
        {"linear_max_iter", Kind::Integer, "Krylov iteration cap"},
        {"snapshots", Kind::IntegerList, "steps at which phase-space CSV dumps are written"},
    };
}

json vp_defaults() {
    const VPConfig c;
    return {{"k", c.mode_k},
            {"gamma", c.amplitude_gamma},
            {"eps", c.epsilon},
            {"sigma", to_string(c.sigma.kind)},
            {"sigma_value", c.sigma.value},
            {"dt", c.dt},
            {"final_time", c.final_time},
            {"velocity_cut", c.velocity_cut},
            {"nx", c.cells_x},
            {"nv", c.cells_v},
            {"initial", "landau"},
            {"picard_tol", c.picard_tol},
            {"picard_max", c.picard_max},
            {"linear_tol", c.linear_tol},
            {"linear_max_iter", c.linear_max_iter},
            {"snapshots", json::array()}};
}

std::vector<Key> rate_keys() {
    return {{"window", Kind::RealList, "fit window t_a,t_b (empty: whole run)"},
            {"fit", Kind::Text, "rate fit: peaks or linear"}};
}

std::vector<Leaf> make_leaves() {
    std::vector<Leaf> leaves;

    leaves.push_back({"circle", "run", "rotating-field run with error history", PresetFamily::Circle,
                      circle_keys(), circle_defaults()});

    auto conv_keys = circle_keys();
    conv_keys.push_back({"axis", Kind::Text, "time or space"});
    conv_keys.push_back({"levels", Kind::IntegerList, "time steps or cells per level"});
    auto conv_defaults = circle_defaults();
    conv_defaults["eps"] = 1.0;
    conv_defaults["steps"] = 100;
    conv_defaults["axis"] = "time";
    conv_defaults["levels"] = {25, 50, 100};
    leaves.push_back({"circle", "convergence", "time or space convergence study", PresetFamily::Circle,
                      conv_keys, conv_defaults});

    const SigmaScanConfig scan;
    leaves.push_back({"circle",
                      "sigma-scan",
                      "sigma selection scan",
                      PresetFamily::None,
                      {{"mode", Kind::Text, "nonlimit (eps = 1) or limit (eps = 0)"},
                       {"grids", Kind::IntegerList, "cells per direction"},
                       {"sigma_min", Kind::Real, "smallest sigma"},
                       {"sigma_max", Kind::Real, "largest sigma"},
                       {"points_per_decade", Kind::Integer, "sigma samples per decade"},
                       {"eta", Kind::Real, "nonlimit admissibility threshold"},
                       {"dt", Kind::Real, "time step"},
                       {"steps", Kind::Integer, "number of time steps"},
                       {"peak_x", Kind::Real, "initial peak centre x"},
                       {"peak_y", Kind::Real, "initial peak centre y"},
                       {"peak_width", Kind::Real, "initial peak width"},
                       {"quadrature_points", Kind::Integer, "angular nodes of the limit solution"},
                       {"linear_tol", Kind::Real, "relative residual of the stage solves"}},
                      {{"mode", "nonlimit"},
                       {"grids", scan.grids},
                       {"sigma_min", scan.sigma_min},
                       {"sigma_max", scan.sigma_max},
                       {"points_per_decade", scan.points_per_decade},
                       {"eta", scan.eta},
                       {"dt", scan.dt},
                       {"steps", scan.steps},
                       {"peak_x", scan.peak.center_x},
                       {"peak_y", scan.peak.center_y},
                       {"peak_width", scan.peak.width},
                       {"quadrature_points", scan.quadrature_points},
                       {"linear_tol", scan.linear_tol}}});

    leaves.push_back({"circle",
                      "condition",
                      "condition estimates of the micro-macro and direct stage systems",
                      PresetFamily::None,
                      {{"n", Kind::Integer, "cells per direction"},
                       {"eps_list", Kind::RealList, "epsilon values"},
                       {"dt", Kind::Real, "time step"},
                       {"sigma", Kind::Text, "sigma policy: dx2, dx, scaled-dx2, fixed"},
                       {"sigma_value", Kind::Real, "sigma for the fixed policy"}},
                      {{"n", 50},
                       {"eps_list", {1.0, 1e-2, 1e-4, 1e-6}},
                       {"dt", 0.005},
                       {"sigma", "dx2"},
                       {"sigma_value", 0.0}}});

    leaves.push_back({"vp", "run", "Vlasov-Poisson run", PresetFamily::VP, vp_keys(), vp_defaults()});

    auto rk = vp_keys();
    for (auto& k : rate_keys()) rk.push_back(k);
    auto rd = vp_defaults();
    rd["window"] = json::array();
    rd["fit"] = "peaks";
    leaves.push_back({"vp", "rates", "Vlasov-Poisson run and rate fit", PresetFamily::VP, rk, rd});

    auto bk = vp_keys();
    bk.push_back({"beta", Kind::Real, "BGK exponent"});
    bk.push_back({"a", Kind::Real, "BGK amplitude"});
    bk.push_back({"bins", Kind::Integer, "psi bins of the spread metric"});
    auto bd = vp_defaults();
    bd["beta"] = 1.20;
    bd["a"] = 0.2948;
    bd["bins"] = 200;
    leaves.push_back({"vp", "bgk", "Vlasov-Poisson run and BGK fit", PresetFamily::VP, bk, bd});

    leaves.push_back({"reference", "vp", "semi-Lagrangian Vlasov-Poisson run and rate fit",
                      PresetFamily::VP, rk, rd});
    return leaves;
}

std::string flag_name(const std::string& key) {
    std::string out = key;
    std::replace(out.begin(), out.end(), '_', '-');
    return "--" + out;
}

const char* type_name(Kind kind) {
    switch (kind) {
        case Kind::Real: return "FLOAT";
        case Kind::Integer: return "INT";
        case Kind::Text: return "TEXT";
        case Kind::RealList: return "FLOAT,...";
        case Kind::IntegerList: return "INT,...";
    }
    return "TEXT";
}

const Key* find_key(const Leaf& leaf, const std::string& name) {
    for (const auto& k : leaf.keys)
        if (k.name == name) return &k;
    return nullptr;
}

json checked_value(const Key& key, const json& v) {
    auto fail = [&](const char* expected) {
        return ConfigError("key '" + key.name + "' must be " + expected);
    };
    switch (key.kind) {
        case Kind::Real:
            if (!v.is_number()) throw fail("a number");
            return v.get<double>();
        case Kind::Integer:
            if (!v.is_number_integer()) throw fail("an integer");
            return v;
        case Kind::Text:
            if (!v.is_string()) throw fail("a string");
            return v;
        case Kind::RealList: {
            if (!v.is_array()) throw fail("an array of numbers");
            json out = json::array();
            for (const auto& e : v) {
                if (!e.is_number()) throw fail("an array of numbers");
                out.push_back(e.get<double>());
            }
            return out;
        }
        case Kind::IntegerList:
            if (!v.is_array()) throw fail("an array of integers");
            for (const auto& e : v)
                if (!e.is_number_integer()) throw fail("an array of integers");
            return v;
    }
    return v;
}

json parse_flag(const Key& key, const std::string& text) {
    auto fail = [&]() { return ConfigError("flag " + flag_name(key.name) + ": cannot parse '" + text + "'"); };
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw fail();
        }
        if (used != s.size()) throw fail();
        return v;
    };
    auto integer = [&](const std::string& s) {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(s, &used);
        } catch (const std::exception&) {
            throw fail();
        }
        if (used != s.size()) throw fail();
        return v;
    };
    auto split = [&]() {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) parts.push_back(item);
        return parts;
    };
    switch (key.kind) {
        case Kind::Real: return number(text);
        case Kind::Integer: return integer(text);
        case Kind::Text: return text;
        case Kind::RealList: {
            json out = json::array();
            for (const auto& p : split()) out.push_back(number(p));
            return out;
        }
        case Kind::IntegerList: {
            json out = json::array();
            for (const auto& p : split()) out.push_back(integer(p));
            return out;
        }
    }
    return text;
}

void apply_preset(const Leaf& leaf, const std::string& name, json& doc) {
    const auto it = presets().find(name);
    if (it == presets().end()) throw ConfigError("unknown case '" + name + "'");
    if (it->second.family != leaf.family)
        throw ConfigError("case '" + name + "' does not apply to " + leaf.group + " " + leaf.name);
    for (const auto& [k, v] : it->second.values.items())
        if (find_key(leaf, k)) doc[k] = v;
    doc["case"] = name;
}

json load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ConfigError("config file '" + path + "' is empty");
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");
    return doc;
}

json resolve(const Leaf& leaf, const std::optional<std::string>& config_path,
             const std::optional<std::string>& case_flag, const std::map<std::string, std::string>& flags) {
    json doc = leaf.defaults;
    json file = json::object();
    if (config_path) file = load_file(*config_path);

    for (const auto& [k, v] : file.items()) {
        if (k == "case" && leaf.family != PresetFamily::None) {
            if (!v.is_string()) throw ConfigError("key 'case' must be a string");
            continue;
        }
        if (!find_key(leaf, k)) throw ConfigError("unknown key '" + k + "'");
    }

    std::optional<std::string> case_name = case_flag;
    if (!case_name && file.contains("case")) case_name = file["case"].get<std::string>();
    if (case_name) apply_preset(leaf, *case_name, doc);

    for (const auto& [k, v] : file.items()) {
        if (k == "case") continue;
        doc[k] = checked_value(*find_key(leaf, k), v);
    }
    for (const auto& [k, text] : flags) doc[k] = parse_flag(*find_key(leaf, k), text);
    return doc;
}

// ---------------------------------------------------------------------------
// Typed views of a resolved document

SigmaPolicy sigma_from(const json& d) {
    SigmaPolicy p;
    try {
        p.kind = sigma_kind_from_string(d.at("sigma").get<std::string>());
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("key 'sigma': ") + e.what());
    }
    p.value = d.at("sigma_value").get<double>();
    return p;
}

GaussianPeak peak_from(const json& d) {
    return GaussianPeak{d.at("peak_x").get<double>(), d.at("peak_y").get<double>(),
                        d.at("peak_width").get<double>()};
}

CircleConfig circle_from(const json& d) {
    CircleConfig c;
    c.grid.cells_x = d.at("nx").get<int>();
    c.grid.cells_y = d.at("ny").get<int>();
    c.epsilon = d.at("eps").get<double>();
    c.sigma = sigma_from(d);
    c.dt = d.at("dt").get<double>();
    c.steps = d.at("steps").get<int>();
    c.peak = peak_from(d);
    c.quadrature_points = d.at("quadrature_points").get<int>();
    c.linear_tol = d.at("linear_tol").get<double>();
    c.linear_max_iter = d.at("linear_max_iter").get<int>();
    validate(c);
    return c;
}

InitialKind initial_from(const std::string& s) {
    if (s == "landau") return InitialKind::Landau;
    if (s == "two-stream-bumps") return InitialKind::TwoStreamBumps;
    if (s == "two-stream-v2") return InitialKind::TwoStreamVSquared;
    throw ConfigError("key 'initial': unknown initial datum '" + s +
                      "' (expected landau, two-stream-bumps, two-stream-v2)");
}

VPConfig vp_from(const json& d) {
    VPConfig c;
    c.mode_k = d.at("k").get<double>();
    c.amplitude_gamma = d.at("gamma").get<double>();
    c.epsilon = d.at("eps").get<double>();
    c.sigma = sigma_from(d);
    c.dt = d.at("dt").get<double>();
    c.final_time = d.at("final_time").get<double>();
    c.velocity_cut = d.at("velocity_cut").get<double>();
    c.cells_x = d.at("nx").get<int>();
    c.cells_v = d.at("nv").get<int>();
    c.initial_kind = initial_from(d.at("initial").get<std::string>());
    c.picard_tol = d.at("picard_tol").get<double>();
    c.picard_max = d.at("picard_max").get<int>();
    c.linear_tol = d.at("linear_tol").get<double>();
    c.linear_max_iter = d.at("linear_max_iter").get<int>();
    validate(c);
    return c;
}

std::vector<int> snapshots_from(const json& d) {
    auto s = d.at("snapshots").get<std::vector<int>>();
    for (int v : s)
        if (v < 0) throw ConfigError("key 'snapshots': steps must be >= 0");
    return s;
}

struct RateOptions {
    double t_a = 0.0;
    double t_b = 0.0;
    RateFitMode mode = RateFitMode::Peaks;
};

RateOptions rate_options_from(const json& d, double final_time) {
    RateOptions r;
    const auto w = d.at("window").get<std::vector<double>>();
    if (w.empty()) {
        r.t_b = final_time;
    } else if (w.size() == 2) {
        r.t_a = w[0];
        r.t_b = w[1];
    } else {
        throw ConfigError("key 'window' must be empty or hold two times");
    }
    const auto f = d.at("fit").get<std::string>();
    if (f == "peaks") r.mode = RateFitMode::Peaks;
    else if (f == "linear") r.mode = RateFitMode::Linear;
    else throw ConfigError("key 'fit': expected peaks or linear, got '" + f + "'");
    return r;
}

// ---------------------------------------------------------------------------
// Output helpers

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
    fs::create_directories(dir);
    std::ofstream os(dir / name);
    if (!os) throw ConfigError("cannot write '" + (dir / name).string() + "'");
    return os;
}

double drift(double now, double start) {
    return start != 0.0 ? (now - start) / std::abs(start) : now - start;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_circle_run(const json& d, const fs::path& out_dir, std::ostream& out) {
    const CircleConfig c = circle_from(d);
    const CircleRun r = run_circle(c);
    auto os = open_output(out_dir, "circle_run.csv");
    write_csv(os, r);
    const auto& last = r.series.back();
    out << "circle run: eps=" << num(c.epsilon) << " sigma=" << num(r.sigma) << " steps=" << c.steps
        << " L1_0=" << num(last.l1_0) << " L2_0=" << num(last.l2_0) << " Linf_0=" << num(last.linf_0);
    if (c.epsilon > 0.0)
        out << " L1_eps=" << num(last.l1_eps) << " L2_eps=" << num(last.l2_eps)
            << " Linf_eps=" << num(last.linf_eps);
    out << " n_eq=" << (r.n_eq ? std::to_string(*r.n_eq) : std::string("none")) << '\n';
    return kOk;
}

int cmd_circle_convergence(const json& d, const fs::path& out_dir, std::ostream& out) {
    const CircleConfig base = circle_from(d);
    const auto axis_name = d.at("axis").get<std::string>();
    ConvergenceAxis axis;
    if (axis_name == "time") axis = ConvergenceAxis::Time;
    else if (axis_name == "space") axis = ConvergenceAxis::Space;
    else throw ConfigError("key 'axis': expected time or space, got '" + axis_name + "'");
    const auto levels = d.at("levels").get<std::vector<int>>();
    if (levels.size() < 2) throw ConfigError("key 'levels' needs at least two entries");
    const auto r = convergence_study(base, axis, levels);
    auto os = open_output(out_dir, "convergence.csv");
    write_csv(os, r);
    out << "circle convergence: axis=" << axis_name << " slope_L1=" << num(r.slopes[0])
        << " slope_L2=" << num(r.slopes[1]) << " slope_Linf=" << num(r.slopes[2]) << '\n';
    return kOk;
}

int cmd_circle_sigma_scan(const json& d, const fs::path& out_dir, std::ostream& out) {
    SigmaScanConfig c;
    const auto mode = d.at("mode").get<std::string>();
    if (mode == "nonlimit") c.mode = ScanMode::NonLimit;
    else if (mode == "limit") c.mode = ScanMode::Limit;
    else throw ConfigError("key 'mode': expected nonlimit or limit, got '" + mode + "'");
    c.grids = d.at("grids").get<std::vector<int>>();
    c.sigma_min = d.at("sigma_min").get<double>();
    c.sigma_max = d.at("sigma_max").get<double>();
    c.points_per_decade = d.at("points_per_decade").get<int>();
    c.eta = d.at("eta").get<double>();
    c.dt = d.at("dt").get<double>();
    c.steps = d.at("steps").get<int>();
    c.peak = peak_from(d);
    c.quadrature_points = d.at("quadrature_points").get<int>();
    c.linear_tol = d.at("linear_tol").get<double>();
    const auto r = sigma_scan(c);
    auto os = open_output(out_dir, "sigma_scan.csv");
    write_csv(os, r);
    out << "circle sigma-scan: mode=" << mode << " sigma_h=";
    for (std::size_t k = 0; k < r.grids.size(); ++k) {
        if (k) out << ',';
        out << (r.grids[k].sigma_h ? num(*r.grids[k].sigma_h) : std::string("none"));
    }
    if (!r.fit) {
        out << '\n';
        throw FitFailure("sigma-scan: fewer than two grids produced a sigma_h");
    }
    out << " slope=" << num(r.fit->slope) << " r2=" << num(r.fit->r2) << '\n';
    return kOk;
}

int cmd_circle_condition(const json& d, const fs::path& out_dir, std::ostream& out) {
    const int n = d.at("n").get<int>();
    if (n < 4) throw ConfigError("key 'n' must be >= 4");
    const auto eps_list = d.at("eps_list").get<std::vector<double>>();
    if (eps_list.empty()) throw ConfigError("key 'eps_list' must not be empty");
    const double dt = d.at("dt").get<double>();
    const GridSpec spec{1.0, 1.0, n, n, BoundaryKind::FullyTruncated};
    const Grid grid(spec);
    const UnknownLayout layout(grid);
    const auto psi = circle_stream_function(grid);
    MMParams p;
    p.sigma = sigma_policy(sigma_from(d), spec);
    p.dt = dt;

    auto os = open_output(out_dir, "condition.csv");
    csv::header(os, {"eps", "kappa_damm", "kappa_direct"});
    out << "circle condition: n=" << n << " sigma=" << num(p.sigma);
    for (double eps : eps_list) {
        p.epsilon = eps;
        validate(p);
        const auto sys = assemble_stage_system(psi, p, p.lambda * p.dt);
        const double k_mm = condition_estimate(sys, p).kappa;
        double k_id = std::numeric_limits<double>::quiet_NaN();
        if (eps > 0.0) k_id = condition_estimate(implicit_direct_matrix(psi, eps, p.lambda * p.dt, layout)).kappa;
        csv::Row(os) << eps << k_mm << k_id;
        out << " eps=" << num(eps) << ":" << num(k_mm) << "/" << num(k_id);
    }
    out << '\n';
    return kOk;
}

struct VPOutcome {
    std::vector<VPDiagnostics> series;
    GridField initial_f{Grid(GridSpec{})};
    GridField initial_psi{Grid(GridSpec{})};
    GridField final_f{Grid(GridSpec{})};
    GridField final_psi{Grid(GridSpec{})};
};

VPOutcome run_vp_with_outputs(const VPConfig& c, const std::vector<int>& snapshots, const fs::path& out_dir) {
    VPOutcome o;
    const double shift = std::numbers::pi / c.mode_k;
    o.series = run_vp(c, [&](const VPSolver& s) {
        if (s.step_index() == 0) {
            o.initial_f = s.f();
            o.initial_psi = s.psi();
        }
        if (std::find(snapshots.begin(), snapshots.end(), s.step_index()) != snapshots.end()) {
            auto os = open_output(out_dir, "snapshot_" + std::to_string(s.step_index()) + ".csv");
            write_snapshot_csv(os, s.f(), shift);
        }
        if (s.step_index() == c.steps()) {
            o.final_f = s.f();
            o.final_psi = s.psi();
        }
    });
    auto os = open_output(out_dir, "vp_diagnostics.csv");
    write_csv(os, o.series, c.dt);
    return o;
}

void print_run_summary(std::ostream& out, const std::string& label, const std::vector<VPDiagnostics>& s) {
    int max_picard = 0;
    for (const auto& d : s) max_picard = std::max(max_picard, d.picard_iters);
    const auto& a = s.front();
    const auto& b = s.back();
    out << label << " steps=" << s.size() - 1 << " t=" << num(b.time) << " e_l1=" << num(b.e_field_l1)
        << " mass_drift=" << num(drift(b.mass, a.mass)) << " energy_drift=" << num(drift(b.total_energy, a.total_energy))
        << " max_picard=" << max_picard;
}

RateFit fit_series(const std::vector<VPDiagnostics>& s, const RateOptions& r) {
    std::vector<double> t, e;
    for (const auto& d : s) {
        t.push_back(d.time);
        e.push_back(d.e_field_l1);
    }
    return rate_fit(t, e, r.t_a, r.t_b, r.mode);
}

void print_rates(std::ostream& out, const std::string& label, const RateFit& f) {
    out << label << " omega_i=" << num(f.omega_i) << " omega_p=" << num(f.omega_p)
        << " peaks=" << f.peaks.size() << " r2=" << num(f.r2) << '\n';
}

int cmd_vp_run(const json& d, const fs::path& out_dir, std::ostream& out) {
    const VPConfig c = vp_from(d);
    const auto o = run_vp_with_outputs(c, snapshots_from(d), out_dir);
    print_run_summary(out, "vp run:", o.series);
    out << '\n';
    return kOk;
}

int cmd_vp_rates(const json& d, const fs::path& out_dir, std::ostream& out) {
    const VPConfig c = vp_from(d);
    const RateOptions r = rate_options_from(d, c.final_time);
    const auto o = run_vp_with_outputs(c, snapshots_from(d), out_dir);
    print_rates(out, "vp rates:", fit_series(o.series, r));
    return kOk;
}

int cmd_vp_bgk(const json& d, const fs::path& out_dir, std::ostream& out) {
    const VPConfig c = vp_from(d);
    const double beta = d.at("beta").get<double>();
    const double a = d.at("a").get<double>();
    const int bins = d.at("bins").get<int>();
    if (bins < 1) throw ConfigError("key 'bins' must be >= 1");
    const auto o = run_vp_with_outputs(c, snapshots_from(d), out_dir);
    const auto first = bgk_fit(o.initial_f, o.initial_psi, beta, a, bins);
    const auto last = bgk_fit(o.final_f, o.final_psi, beta, a, bins);
    auto s0 = open_output(out_dir, "bgk_scatter_initial.csv");
    write_csv(s0, first);
    auto s1 = open_output(out_dir, "bgk_scatter_final.csv");
    write_csv(s1, last);
    out << "vp bgk: phi_M=" << num(last.phi_max) << " Psi_M=" << num(last.psi_max_point)
        << " Psi_star=" << num(last.psi_star) << " spread_initial=" << num(first.spread_metric)
        << " spread_final=" << num(last.spread_metric) << '\n';
    return kOk;
}

int cmd_reference_vp(const json& d, const fs::path& out_dir, std::ostream& out) {
    const VPConfig c = vp_from(d);
    const RateOptions r = rate_options_from(d, c.final_time);
    const auto snaps = snapshots_from(d);
    const double shift = std::numbers::pi / c.mode_k;
    const auto series = run_semi_lagrangian(c, [&](int n, const GridField& f, const PoissonSolution&) {
        if (std::find(snaps.begin(), snaps.end(), n) != snaps.end()) {
            auto os = open_output(out_dir, "sl_snapshot_" + std::to_string(n) + ".csv");
            write_snapshot_csv(os, f, shift);
        }
    });
    auto os = open_output(out_dir, "sl_diagnostics.csv");
    write_csv(os, series, c.dt);
    print_rates(out, "reference vp:", fit_series(series, r));
    return kOk;
}

using Handler = std::function<int(const json&, const fs::path&, std::ostream&)>;

Handler handler_for(const Leaf& leaf) {
    const std::string id = leaf.group + " " + leaf.name;
    if (id == "circle run") return cmd_circle_run;
    if (id == "circle convergence") return cmd_circle_convergence;
    if (id == "circle sigma-scan") return cmd_circle_sigma_scan;
    if (id == "circle condition") return cmd_circle_condition;
    if (id == "vp run") return cmd_vp_run;
    if (id == "vp rates") return cmd_vp_rates;
    if (id == "vp bgk") return cmd_vp_bgk;
    return cmd_reference_vp;
}

struct LeafBinding {
    const Leaf* leaf = nullptr;
    CLI::App* app = nullptr;
    std::map<std::string, std::string> values;
    std::string config_path;
    std::string case_name;
    std::string out_dir = "out";
    bool dump = false;
};

}  // namespace

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : presets()) names.push_back(k);
    return names;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    static const std::vector<Leaf> leaves = make_leaves();

    CLI::App app{"Micro-macro solver for strongly anisotropic transport", "damm"};
    app.require_subcommand(1);
    std::map<std::string, CLI::App*> groups;
    std::vector<LeafBinding> bindings(leaves.size());

    for (std::size_t n = 0; n < leaves.size(); ++n) {
        const Leaf& leaf = leaves[n];
        auto& group = groups[leaf.group];
        if (!group) {
            group = app.add_subcommand(leaf.group, leaf.group + " experiments");
            group->require_subcommand(1);
        }
        LeafBinding& b = bindings[n];
        b.leaf = &leaf;
        b.app = group->add_subcommand(leaf.name, leaf.description);
        b.app->add_option("--config", b.config_path, "JSON config file");
        if (leaf.family != PresetFamily::None) {
            std::string names;
            for (const auto& [k, v] : presets())
                if (v.family == leaf.family) names += (names.empty() ? "" : ", ") + k;
            b.app->add_option("--case", b.case_name, "named preset: " + names);
        }
        b.app->add_option("--out", b.out_dir, "output directory")->capture_default_str();
        b.app->add_flag("--dump-config", b.dump, "print the resolved config as JSON and exit");
        for (const auto& key : leaf.keys)
            b.app->add_option(flag_name(key.name), b.values[key.name], key.help)->type_name(type_name(key.kind));
    }

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("damm");

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* context = &app;
        for (const auto& b : bindings)
            if (b.app->parsed()) context = b.app;
        for (const auto& [name, g] : groups)
            if (g->parsed() && context == &app) context = g;
        err << context->help();
        return kBadInput;
    }

    LeafBinding* chosen = nullptr;
    for (auto& b : bindings)
        if (b.app->parsed()) chosen = &b;
    if (!chosen) {
        err << app.help();
        return kBadInput;
    }

    try {
        std::map<std::string, std::string> flags;
        for (const auto& key : chosen->leaf->keys)
            if (chosen->app->count(flag_name(key.name)) > 0) flags[key.name] = chosen->values[key.name];
        const std::optional<std::string> config =
            chosen->config_path.empty() ? std::nullopt : std::optional<std::string>(chosen->config_path);
        const std::optional<std::string> case_name =
            chosen->case_name.empty() ? std::nullopt : std::optional<std::string>(chosen->case_name);
        const json doc = resolve(*chosen->leaf, config, case_name, flags);
        if (chosen->dump) {
            out << doc.dump(2) << '\n';
            return kOk;
        }
        return handler_for(*chosen->leaf)(doc, fs::path(chosen->out_dir), out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const SolverFailure& e) {
        err << "solver failure: " << e.what() << " (residual " << e.residual() << ", iterations "
            << e.iterations() << ")\n";
        return kSolverFailure;
    } catch (const FitFailure& e) {
        err << "fit failure: " << e.what() << '\n';
        return kFitFailure;
    }
}

}  // namespace damm::cli
