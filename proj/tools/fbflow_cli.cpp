#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>

#include "CLI11.hpp"

#include "fbflow/fbflow.hpp"

namespace fs = std::filesystem;
using namespace fbflow;

namespace {

enum Exit { kOk = 0, kNotConverged = 1, kConfigError = 2, kRuntimeError = 3 };

struct Options {
    std::string config;
    std::string out = ".";
    std::string checkpoint;
    std::string check = "all";
    bool svg = false;
    bool quiet = false;
};

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path.string());
    return os;
}

fs::path output_dir(const Options& opt, const RunConfig& cfg) {
    fs::path dir = opt.out;
    if (opt.out == "." && !cfg.directory.empty()) dir = cfg.directory;
    fs::create_directories(dir);
    return dir;
}

void say(const Options& opt, const std::string& line) {
    if (!opt.quiet) std::cout << line << '\n';
}

std::string run_label(double A, int n) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "A_%.6g_n_%d", A, n);
    return buf;
}

int cmd_solve(const Options& opt) {
    const RunConfig cfg = load_config(opt.config);
    if (cfg.n_list.size() > 1 || cfg.A_list.size() > 1)
        log_warning("solve uses only the first mesh and amplitude of each list");
    const fs::path dir = output_dir(opt, cfg);
    const Domain d = cfg.domain();
    const BoundaryData b = cfg.boundary();
    const PhaseModel m = cfg.model(d);
    const CoefficientField q(d, cfg.Q);
    GradientFlow flow(d, m, q, cfg.solver);
    const SteadyState st = run_to_steady_state(flow, initial_data(d, b));
    const FreeBoundary fb = extract_zero_contour(st.field);

    CheckpointMeta meta;
    meta.theta = cfg.theta;
    meta.n = d.n();
    meta.h = d.h();
    meta.epsilon = m.epsilon;
    meta.lambda1 = m.lambda1;
    meta.lambda2 = m.lambda2;
    meta.A = b.amplitude;
    meta.x0 = b.x0;
    meta.delta = b.delta;
    meta.step = st.steps;
    meta.time = st.time;
    save_checkpoint(dir / "checkpoint.bin", st.field, meta);
    {
        auto os = open_out(dir / "trace.csv");
        write_trace_csv(os, st.trace);
    }
    {
        auto os = open_out(dir / "contour.csv");
        write_contour_csv(os, fb);
    }
    if (opt.svg || cfg.svg) render_svg(fb, st.field, dir / "solution.svg");

    SweepRow row;
    classify(row, fb, d);
    char buf[256];
    std::snprintf(buf, sizeof buf, "n=%d A=%.6g converged=%s steps=%ld J_eps=%.12g terminal=%s arclength=%.6g",
                  d.n(), b.amplitude, st.converged ? "yes" : "no", st.steps, st.trace.back().energy,
                  to_string(row.edge), row.arclength);
    say(opt, buf);
    return st.converged ? kOk : kNotConverged;
}

int cmd_sweep(const Options& opt) {
    const RunConfig cfg = load_config(opt.config);
    const fs::path dir = output_dir(opt, cfg);
    const bool svg = opt.svg || cfg.svg;
    std::mutex io;
    // Each run owns its (A, n) subdirectory.
    const auto on_run = [&](const RunOutcome& r) {
        const fs::path sub = dir / run_label(r.row.A, r.row.n);
        fs::create_directories(sub);
        {
            auto os = open_out(sub / "contour.csv");
            write_contour_csv(os, r.boundary);
        }
        {
            auto os = open_out(sub / "trace.csv");
            write_trace_csv(os, r.state.trace);
        }
        if (svg && r.row.error.empty()) render_svg(r.boundary, r.state.field, sub / "solution.svg");
        std::lock_guard lock(io);
        say(opt, run_label(r.row.A, r.row.n) + (r.row.converged ? " converged" : " not converged") +
                     " terminal=" + to_string(r.row.edge));
    };
    const SweepResult sr = sweep_ladder(cfg.theta, cfg.boundary(), cfg.A_list, cfg.n_list, cfg.solver,
                                        cfg.lambda1, cfg.lambda2, cfg.Q, on_run);
    {
        auto os = open_out(dir / "sweep.csv");
        write_sweep_csv(os, sr);
    }
    nlohmann::json report;
    try {
        report = to_json(detect_jump(sr));
    } catch (const Error& e) {
        report = {{"error", e.what()}};
    }
    {
        auto os = open_out(dir / "jump_report.json");
        os << report.dump(2) << '\n';
    }
    bool all = true;
    for (const auto& r : sr.rows) all = all && r.converged;
    return all ? kOk : kNotConverged;
}

int cmd_refine(const Options& opt) {
    const RunConfig cfg = load_config(opt.config);
    const fs::path dir = output_dir(opt, cfg);
    const LadderResult lr = refine_ladder(cfg.theta, cfg.boundary(), cfg.solver, cfg.lambda1, cfg.lambda2, cfg.Q,
                                          cfg.n_list, cfg.tol_ref);
    {
        auto os = open_out(dir / "ladder.csv");
        write_ladder_csv(os, lr);
    }
    char buf[160];
    for (std::size_t k = 0; k < lr.levels.size(); ++k) {
        const auto& l = lr.levels[k];
        std::snprintf(buf, sizeof buf, "n=%d converged=%s J_eps=%.12g", l.n, l.converged ? "yes" : "no", l.energy);
        say(opt, buf);
    }
    say(opt, lr.converged_at >= 0 ? "ladder met tol_ref at n=" + std::to_string(lr.levels[lr.converged_at].n)
                                  : std::string("ladder did not meet tol_ref"));
    bool all = true;
    for (const auto& l : lr.levels) all = all && l.converged;
    return all ? kOk : kNotConverged;
}

int cmd_diagnose(const Options& opt) {
    const auto& names = diagnostic_names();
    if (opt.check != "all" && std::find(names.begin(), names.end(), opt.check) == names.end())
        throw ConfigError("unknown check '" + opt.check + "'");
    double Q = 1.0, lin_tol = SolverConfig{}.lin_tol;
    fs::path dir = opt.out;
    if (!opt.config.empty()) {
        const RunConfig cfg = load_config(opt.config);
        Q = cfg.Q;
        lin_tol = cfg.solver.lin_tol;
        dir = output_dir(opt, cfg);
    } else {
        fs::create_directories(dir);
    }
    const auto [field, meta] = load_checkpoint(opt.checkpoint);
    const PhaseModel m(meta.lambda1, meta.lambda2, meta.epsilon);
    const CoefficientField q(field.domain(), Q);
    const auto rows = run_diagnostics(field, m, q, opt.check, lin_tol);
    {
        auto os = open_out(dir / "report.csv");
        write_report_csv(os, rows);
    }
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-13s %s value=%.6g tolerance=%.6g (%s)", r.name.c_str(),
                      r.pass ? "PASS" : "FAIL", r.value, r.tolerance, r.parameters.c_str());
        say(opt, buf);
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-phase free boundary solver on a parallelogram"};
    app.require_subcommand(1);
    Options opt;
    auto common = [&](CLI::App* sub, bool config_required) {
        auto* c = sub->add_option("--config", opt.config, "JSON run configuration");
        if (config_required) c->required();
        c->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "output directory");
        sub->add_flag("--quiet", opt.quiet, "suppress progress and warnings");
    };
    auto* solve = app.add_subcommand("solve", "single run: checkpoint, trace, contour, optional SVG");
    common(solve, true);
    solve->add_flag("--svg", opt.svg, "also write an SVG plot");
    auto* sweep = app.add_subcommand("sweep", "amplitude sweep over one or more meshes");
    common(sweep, true);
    sweep->add_flag("--svg", opt.svg, "also write an SVG plot per run");
    auto* refine = app.add_subcommand("refine", "mesh refinement ladder");
    common(refine, true);
    auto* diagnose = app.add_subcommand("diagnose", "checks on a saved steady state");
    common(diagnose, false);
    diagnose->add_option("--checkpoint", opt.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    diagnose->add_option("--check", opt.check, "monotonicity, jump, angle, neumann, gradient or all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }
    if (opt.quiet) set_log_level(LogLevel::quiet);

    try {
        if (*solve) return cmd_solve(opt);
        if (*sweep) return cmd_sweep(opt);
        if (*refine) return cmd_refine(opt);
        return cmd_diagnose(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}
