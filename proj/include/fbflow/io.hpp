#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fbflow/field.hpp"
#include "fbflow/free_boundary.hpp"
#include "fbflow/geometry.hpp"
#include "fbflow/solver.hpp"

namespace fbflow {

/// Invalid configuration file or value.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct RunConfig {
    // geometry
    double theta = 0.0;
    std::vector<int> n_list;
    // boundary
    std::vector<double> A_list;
    double x0 = 0.0;
    double delta = 0.0;
    // model
    double lambda1 = 0.0;
    double lambda2 = 1.0;
    double Q = 1.0;
    // solver (slave_factor lives here too)
    SolverConfig solver;
    double tol_ref = 1e-3;
    // outputs
    std::string directory;
    bool svg = false;

    BoundaryData boundary(double A) const { return {A, x0, delta}; }
    BoundaryData boundary() const { return boundary(A_list.front()); }
    Domain domain(int n) const { return Domain(theta, n); }
    Domain domain() const { return domain(n_list.front()); }
    PhaseModel model(const Domain& d) const { return PhaseModel(lambda1, lambda2, solver.epsilon(d)); }
};

namespace detail {

// Keys accepted per section; flat configs may use any of them at top level.
inline const std::map<std::string, std::set<std::string>>& config_sections() {
    static const std::map<std::string, std::set<std::string>> s{
        {"geometry", {"theta", "n", "n_list"}},
        {"boundary", {"A", "A_list", "x0", "delta"}},
        {"model", {"lambda1", "lambda2", "slave_factor", "Q"}},
        {"solver", {"dt", "dt_factor", "ss_tol", "ss_window", "max_steps", "lin_tol", "closure", "tol_ref"}},
        {"outputs", {"directory", "svg"}},
    };
    return s;
}

inline double get_number(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(key + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(key + ": must be finite");
    return x;
}

inline long get_integer(const nlohmann::json& v, const std::string& key) {
    if (v.is_number_integer()) return v.get<long>();
    if (v.is_number_float()) {
        const double x = v.get<double>();
        if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 9e15) return static_cast<long>(x);
    }
    throw ConfigError(key + ": expected an integer");
}

} // namespace detail

/// Parses and validates a configuration object; defaults fill missing keys.
inline RunConfig parse_config(const nlohmann::json& root) {
    if (!root.is_object()) throw ConfigError("config: top level must be a JSON object");
    const auto& sections = detail::config_sections();

    // Flatten into key -> (qualified name, value), rejecting unknown or repeated keys.
    std::map<std::string, std::pair<std::string, nlohmann::json>> flat;
    auto put = [&](const std::string& section, const std::string& key, const nlohmann::json& v) {
        const auto& allowed = sections.at(section);
        if (!allowed.count(key)) throw ConfigError("unknown key: " + section + "." + key);
        if (flat.count(key)) throw ConfigError("duplicate key: " + key);
        flat[key] = {section + "." + key, v};
    };
    for (const auto& [key, value] : root.items()) {
        if (sections.count(key)) {
            if (!value.is_object()) throw ConfigError(key + ": expected an object");
            for (const auto& [k, v] : value.items()) put(key, k, v);
            continue;
        }
        bool found = false;
        for (const auto& [section, keys] : sections)
            if (keys.count(key)) {
                put(section, key, value);
                found = true;
                break;
            }
        if (!found) throw ConfigError("unknown key: " + key);
    }
    auto has = [&](const char* k) { return flat.count(k) > 0; };
    auto name = [&](const char* k) { return flat.at(k).first; };
    auto number = [&](const char* k) { return detail::get_number(flat.at(k).second, name(k)); };
    auto integer = [&](const char* k) { return detail::get_integer(flat.at(k).second, name(k)); };
    auto number_or = [&](const char* k, double dflt) { return has(k) ? number(k) : dflt; };

    RunConfig c;
    if (!has("theta")) throw ConfigError("missing key: geometry.theta");
    c.theta = number("theta");
    if (has("n") == has("n_list")) throw ConfigError("geometry: give exactly one of n or n_list");
    if (has("n")) {
        c.n_list = {static_cast<int>(integer("n"))};
    } else {
        const auto& arr = flat.at("n_list").second;
        if (!arr.is_array() || arr.empty()) throw ConfigError(name("n_list") + ": expected a nonempty array");
        for (std::size_t k = 0; k < arr.size(); ++k)
            c.n_list.push_back(static_cast<int>(detail::get_integer(arr[k], name("n_list"))));
        for (std::size_t k = 1; k < c.n_list.size(); ++k)
            if (c.n_list[k] <= c.n_list[k - 1]) throw ConfigError(name("n_list") + ": must be strictly increasing");
    }
    if (has("A") == has("A_list")) throw ConfigError("boundary: give exactly one of A or A_list");
    if (has("A")) {
        c.A_list = {number("A")};
    } else {
        const auto& arr = flat.at("A_list").second;
        if (!arr.is_array() || arr.empty()) throw ConfigError(name("A_list") + ": expected a nonempty array");
        for (std::size_t k = 0; k < arr.size(); ++k) c.A_list.push_back(detail::get_number(arr[k], name("A_list")));
        for (std::size_t k = 1; k < c.A_list.size(); ++k)
            if (c.A_list[k] <= c.A_list[k - 1]) throw ConfigError(name("A_list") + ": must be strictly increasing");
    }
    if (!has("x0")) throw ConfigError("missing key: boundary.x0");
    if (!has("delta")) throw ConfigError("missing key: boundary.delta");
    c.x0 = number("x0");
    c.delta = number("delta");

    c.lambda1 = number_or("lambda1", c.lambda1);
    c.lambda2 = number_or("lambda2", c.lambda2);
    c.Q = number_or("Q", c.Q);
    c.solver.slave_factor = number_or("slave_factor", c.solver.slave_factor);
    c.solver.dt = number_or("dt", c.solver.dt);
    c.solver.dt_factor = number_or("dt_factor", c.solver.dt_factor);
    c.solver.ss_tol = number_or("ss_tol", c.solver.ss_tol);
    if (has("ss_window")) c.solver.ss_window = static_cast<int>(integer("ss_window"));
    if (has("max_steps")) c.solver.max_steps = integer("max_steps");
    c.solver.lin_tol = number_or("lin_tol", c.solver.lin_tol);
    if (has("closure")) {
        const auto& v = flat.at("closure").second;
        if (v == "energy") c.solver.closure = NeumannClosure::energy;
        else if (v == "ghost") c.solver.closure = NeumannClosure::ghost;
        else throw ConfigError(name("closure") + ": expected \"energy\" or \"ghost\"");
    }
    if (has("tol_ref")) {
        // JSON has no infinity; null means "single level".
        const auto& v = flat.at("tol_ref").second;
        c.tol_ref = v.is_null() ? std::numeric_limits<double>::infinity() : number("tol_ref");
    }
    if (has("directory")) {
        const auto& v = flat.at("directory").second;
        if (!v.is_string()) throw ConfigError(name("directory") + ": expected a string");
        c.directory = v.get<std::string>();
    }
    if (has("svg")) {
        const auto& v = flat.at("svg").second;
        if (!v.is_boolean()) throw ConfigError(name("svg") + ": expected true or false");
        c.svg = v.get<bool>();
    }

    // Component invariants, reported against the offending key.
    auto guard = [](const std::string& key, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(key + ": " + e.what());
        }
    };
    for (int n : c.n_list) guard("geometry", [&] { Domain(c.theta, n); });
    for (double A : c.A_list) guard(has("A") ? name("A") : name("A_list"), [&] { c.boundary(A).validate(); });
    guard(has("delta") ? name("delta") : "boundary", [&] {
        BoundaryData b{1.0, c.x0, c.delta};
        b.validate();
    });
    guard("model", [&] { PhaseModel(c.lambda1, c.lambda2, 1.0).validate(); });
    if (!(c.Q > 0.0)) throw ConfigError("model.Q: must be positive");
    guard("solver", [&] { c.solver.validate(); });
    if (!(c.tol_ref > 0.0)) throw ConfigError("solver.tol_ref: must be positive");
    return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["geometry"]["theta"] = c.theta;
    if (c.n_list.size() == 1) j["geometry"]["n"] = c.n_list.front();
    else j["geometry"]["n_list"] = c.n_list;
    if (c.A_list.size() == 1) j["boundary"]["A"] = c.A_list.front();
    else j["boundary"]["A_list"] = c.A_list;
    j["boundary"]["x0"] = c.x0;
    j["boundary"]["delta"] = c.delta;
    j["model"] = {{"lambda1", c.lambda1}, {"lambda2", c.lambda2}, {"slave_factor", c.solver.slave_factor}, {"Q", c.Q}};
    j["solver"] = {{"dt", c.solver.dt},
                   {"dt_factor", c.solver.dt_factor},
                   {"ss_tol", c.solver.ss_tol},
                   {"ss_window", c.solver.ss_window},
                   {"max_steps", c.solver.max_steps},
                   {"lin_tol", c.solver.lin_tol},
                   {"closure", to_string(c.solver.closure)}};
    j["solver"]["tol_ref"] = std::isinf(c.tol_ref) ? nlohmann::json(nullptr) : nlohmann::json(c.tol_ref);
    j["outputs"] = {{"directory", c.directory}, {"svg", c.svg}};
    return j;
}

inline std::string serialize(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

inline RunConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(j);
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Checkpoint

struct CheckpointMeta {
    static constexpr int kVersion = 1;
    int version = kVersion;
    double theta = 0.0;
    int n = 0;
    double h = 0.0;
    double epsilon = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 1.0;
    double A = 0.0;
    double x0 = 0.0;
    double delta = 0.0;
    long step = 0;
    double time = 0.0;
};

namespace detail {
inline std::uint64_t to_little_endian(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int k = 0; k < 8; ++k) r |= ((v >> (8 * k)) & 0xffu) << (8 * (7 - k));
        return r;
    }
    return v;
}
inline std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Field& f, const CheckpointMeta& meta) {
    if (meta.n != f.n()) throw Error("checkpoint: meta n does not match the field");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("checkpoint: cannot write " + path.string());
    out << "format=fbflow-checkpoint\n"
        << "version=" << meta.version << '\n'
        << "theta=" << detail::exact(meta.theta) << '\n'
        << "n=" << meta.n << '\n'
        << "h=" << detail::exact(meta.h) << '\n'
        << "epsilon=" << detail::exact(meta.epsilon) << '\n'
        << "lambda1=" << detail::exact(meta.lambda1) << '\n'
        << "lambda2=" << detail::exact(meta.lambda2) << '\n'
        << "A=" << detail::exact(meta.A) << '\n'
        << "x0=" << detail::exact(meta.x0) << '\n'
        << "delta=" << detail::exact(meta.delta) << '\n'
        << "step=" << meta.step << '\n'
        << "time=" << detail::exact(meta.time) << '\n'
        << '\n';
    for (double v : f.values()) {
        const std::uint64_t bits = detail::to_little_endian(std::bit_cast<std::uint64_t>(v));
        out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    if (!out) throw Error("checkpoint: write failed for " + path.string());
}

inline std::pair<Field, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("checkpoint: cannot open " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    bool ended = false;
    while (std::getline(in, line)) {
        if (line.empty()) {
            ended = true;
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("checkpoint: malformed header line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (!ended) throw Error("checkpoint: header is not terminated by a blank line");
    if (kv["format"] != "fbflow-checkpoint") throw Error("checkpoint: not an fbflow checkpoint");
    auto field = [&](const char* k) -> const std::string& {
        const auto it = kv.find(k);
        if (it == kv.end()) throw Error(std::string("checkpoint: missing header key ") + k);
        return it->second;
    };
    auto real = [&](const char* k) {
        const std::string& s = field(k);
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0') throw Error(std::string("checkpoint: bad value for ") + k);
        return v;
    };
    auto whole = [&](const char* k) {
        const std::string& s = field(k);
        char* end = nullptr;
        const long v = std::strtol(s.c_str(), &end, 10);
        if (end == s.c_str() || *end != '\0') throw Error(std::string("checkpoint: bad value for ") + k);
        return v;
    };
    CheckpointMeta m;
    m.version = static_cast<int>(whole("version"));
    if (m.version != CheckpointMeta::kVersion)
        throw Error("checkpoint: version " + std::to_string(m.version) + " is not supported (expected " +
                    std::to_string(CheckpointMeta::kVersion) + ")");
    m.theta = real("theta");
    m.n = static_cast<int>(whole("n"));
    m.h = real("h");
    m.epsilon = real("epsilon");
    m.lambda1 = real("lambda1");
    m.lambda2 = real("lambda2");
    m.A = real("A");
    m.x0 = real("x0");
    m.delta = real("delta");
    m.step = whole("step");
    m.time = real("time");

    const Domain d(m.theta, m.n);
    const std::streampos start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg() - start);
    const std::size_t expected = d.node_count() * sizeof(double);
    if (bytes != expected)
        throw Error("checkpoint: size mismatch, expected " + std::to_string(expected) + " bytes of values for n = " +
                    std::to_string(m.n) + ", found " + std::to_string(bytes));
    in.seekg(start);
    std::vector<double> values(d.node_count());
    for (double& v : values) {
        std::uint64_t bits = 0;
        in.read(reinterpret_cast<char*>(&bits), sizeof bits);
        v = std::bit_cast<double>(detail::to_little_endian(bits));
    }
    if (!in) throw Error("checkpoint: read failed for " + path.string());
    return {Field(d, std::move(values)), m};
}

// ---------------------------------------------------------------------------
// SVG

/// Domain outline, sign regions in two flat colors, and the contour.
inline std::string svg_document(const FreeBoundary& fb, const Field& f) {
    const Domain& d = f.domain();
    const int n = d.n();
    const Point corners[4] = {d.to_physical(0, 0), d.to_physical(1, 0), d.to_physical(1, 1), d.to_physical(0, 1)};
    double xmin = corners[0].x, xmax = xmin, ymin = corners[0].y, ymax = ymin;
    for (const auto& c : corners) {
        xmin = std::min(xmin, c.x);
        xmax = std::max(xmax, c.x);
        ymin = std::min(ymin, c.y);
        ymax = std::max(ymax, c.y);
    }
    const double size = 480.0, margin = 10.0;
    const double scale = size / std::max(xmax - xmin, ymax - ymin);
    const double width = (xmax - xmin) * scale + 2 * margin, height = (ymax - ymin) * scale + 2 * margin;
    char buf[64];
    auto xy = [&](Point p) {
        std::snprintf(buf, sizeof buf, "%.3f,%.3f", margin + (p.x - xmin) * scale, margin + (ymax - p.y) * scale);
        return std::string(buf);
    };
    auto quad = [&](Point a, Point b, Point c, Point e) {
        return xy(a) + " " + xy(b) + " " + xy(c) + " " + xy(e);
    };
    const char* positive = "#f4a582";
    const char* negative = "#92c5de";

    auto cell_positive = [&](int i, int j) {
        return f(i, j) + f(i + 1, j) + f(i, j + 1) + f(i + 1, j + 1) > 0.0;
    };
    bool any_negative = false;
    for (int j = 0; j < n && !any_negative; ++j)
        for (int i = 0; i < n; ++i)
            if (!cell_positive(i, j)) {
                any_negative = true;
                break;
            }

    std::ostringstream os;
    std::snprintf(buf, sizeof buf, "%.0f", width);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << buf;
    std::snprintf(buf, sizeof buf, "%.0f", height);
    os << "\" height=\"" << buf << "\">\n";
    const std::string outline = quad(corners[0], corners[1], corners[2], corners[3]);
    os << "<polygon points=\"" << outline << "\" fill=\"" << (any_negative ? negative : positive)
       << "\" stroke=\"none\"/>\n";
    if (any_negative) {
        const double h = d.h();
        for (int j = 0; j < n; ++j) {
            int i = 0;
            while (i < n) {
                if (!cell_positive(i, j)) {
                    ++i;
                    continue;
                }
                int e = i;
                while (e < n && cell_positive(e, j)) ++e;
                os << "<polygon points=\""
                   << quad(d.to_physical(i * h, j * h), d.to_physical(e * h, j * h),
                           d.to_physical(e * h, (j + 1) * h), d.to_physical(i * h, (j + 1) * h))
                   << "\" fill=\"" << positive << "\" stroke=\"none\"/>\n";
                i = e;
            }
        }
    }
    os << "<polygon points=\"" << outline << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    for (const auto& pl : fb.polylines) {
        os << "<polyline points=\"";
        for (std::size_t k = 0; k < pl.points.size(); ++k) os << (k ? " " : "") << xy(pl.points[k]);
        os << "\" fill=\"none\" stroke=\"#d7301f\" stroke-width=\"2\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void render_svg(const FreeBoundary& fb, const Field& f, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("svg: cannot write " + path.string());
    out << svg_document(fb, f);
    if (!out) throw Error("svg: write failed for " + path.string());
}

} // namespace fbflow
