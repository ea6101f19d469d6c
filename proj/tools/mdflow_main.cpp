// Command-line harness around the flow library: generic evolution runs,
// temporal convergence sweeps, structure-preservation diagnostics, mesh
// quality certification, and a mesh generator utility. Exit codes: 0 on
// success, 2 on configuration errors, 3 on solver failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdflow/anisotropy.hpp"
#include "mdflow/errors.hpp"
#include "mdflow/experiments.hpp"
#include "mdflow/mesh_io.hpp"
#include "mdflow/schemes.hpp"
#include "mdflow/shapes.hpp"

namespace {

using namespace mdflow;

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

struct CommonOptions {
    std::string gamma = "iso";
    std::string scheme = "md";
    int bdf = 1;
    double dt = 1e-3;
    double tend = 1.0;
    int sav_exponent = 0;
    double sav_shift = 1.0;
    double tol = 0.0;  // 0 keeps the per-solver defaults
    std::string stabilizer = "auto";
    int bootstrap_substeps = 0;
    std::string shape = "sphere";
    double h = 0.15;
    std::string mesh_path;
    std::string out_dir = ".";
    int snapshot_every = 0;
    bool vtk = false;
    long seed = 0;
};

void add_scheme_options(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--gamma", opt.gamma,
                    "Density spec: iso | ellip:a1,a2,a3 | fold3:beta | "
                    "fold4:beta");
    cmd->add_option("--scheme", opt.scheme,
                    "md | vc-md | sav-md | vc-sav-md | es-lm | vc-lm | "
                    "sp-lm | lm-sav");
    cmd->add_option("--bdf", opt.bdf, "Backward-difference order (1..4)");
    cmd->add_option("--r", opt.sav_exponent,
                    "Auxiliary-variable exponent (0 selects order+1)");
    cmd->add_option("--C", opt.sav_shift, "Auxiliary energy shift");
    cmd->add_option("--tol", opt.tol,
                    "Solver tolerance override for Newton and Picard");
    cmd->add_option("--stabilizer", opt.stabilizer,
                    "auto or an explicit stabilization constant");
    cmd->add_option("--bootstrap-substeps", opt.bootstrap_substeps,
                    "History substeps per level (0 derives from dt)");
    cmd->add_option("--seed", opt.seed, "Seed for sampled verifications");
}

void add_output_options(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--out", opt.out_dir, "Output directory");
    cmd->add_option("--snapshot-every", opt.snapshot_every,
                    "Mesh snapshot stride in steps (0 disables)");
    cmd->add_flag("--vtk", opt.vtk, "Write VTK snapshots alongside OFF");
}

void add_geometry_options(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--shape", opt.shape,
                    "sphere[:r] | ellipsoid:a,b,c | cuboid:lx,ly,lz | "
                    "torus:R,r");
    cmd->add_option("--h", opt.h, "Target mesh resolution for --shape");
    cmd->add_option("--mesh", opt.mesh_path,
                    "OFF file to evolve instead of a generated shape");
}

std::optional<double> parse_stabilizer(const std::string& text) {
    if (text == "auto") return std::nullopt;
    size_t used = 0;
    double value = std::stod(text, &used);
    if (used != text.size())
        throw Error("stabilizer must be 'auto' or a number, got '" + text +
                    "'");
    return value;
}

SchemeConfig build_config(const CommonOptions& opt) {
    SchemeConfig config;
    config.scheme = parse_scheme(opt.scheme);
    config.bdf_order = opt.bdf;
    config.dt = opt.dt;
    config.sav_exponent = opt.sav_exponent;
    config.sav_shift = opt.sav_shift;
    if (opt.tol > 0.0) {
        config.newton_tol = opt.tol;
        config.picard_tol = opt.tol;
    }
    config.stabilizer = parse_stabilizer(opt.stabilizer);
    config.bootstrap_substeps = opt.bootstrap_substeps;
    for (const std::string& warning : config.validate())
        std::cerr << "warning: " << warning << "\n";
    return config;
}

SurfaceMesh load_geometry(const CommonOptions& opt) {
    if (!opt.mesh_path.empty()) return read_mesh_off(opt.mesh_path);
    return generate_shape(opt.shape, opt.h);
}

std::vector<double> parse_dt_list(const std::string& text) {
    std::vector<double> dts;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ',')) {
        if (item.empty()) continue;
        size_t used = 0;
        dts.push_back(std::stod(item, &used));
        if (used != item.size())
            throw Error("bad step size '" + item + "' in --dts");
    }
    if (dts.empty()) throw Error("--dts needs at least one step size");
    return dts;
}

std::string out_path(const CommonOptions& opt, const std::string& name) {
    std::filesystem::create_directories(opt.out_dir);
    return (std::filesystem::path(opt.out_dir) / name).string();
}

std::string trimmed(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

// Expands `--config file` into the flags the file mirrors, inserted right
// after the subcommand so explicit command-line flags land later and win
// under the take-last policy.
std::vector<std::string> expand_config_files(int argc, char** argv) {
    std::vector<std::string> tokens(argv + 1, argv + argc);
    std::vector<std::string> files;
    for (size_t i = 0; i < tokens.size();) {
        if (tokens[i] == "--config") {
            if (i + 1 >= tokens.size())
                throw Error("--config needs a file path");
            files.push_back(tokens[i + 1]);
            tokens.erase(tokens.begin() + i, tokens.begin() + i + 2);
        } else if (tokens[i].rfind("--config=", 0) == 0) {
            files.push_back(tokens[i].substr(9));
            tokens.erase(tokens.begin() + i);
        } else {
            ++i;
        }
    }
    if (files.empty()) return tokens;

    std::vector<std::string> from_files;
    for (const std::string& file : files) {
        std::ifstream in(file);
        if (!in) throw Error("cannot read config file " + file);
        std::string line;
        while (std::getline(in, line)) {
            line = trimmed(line);
            if (line.empty() || line[0] == '#' || line[0] == ';') continue;
            size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw Error("config line without '=': " + line);
            std::string key = trimmed(line.substr(0, eq));
            std::string value = trimmed(line.substr(eq + 1));
            if (value.size() >= 2 && value.front() == '"' &&
                value.back() == '"')
                value = value.substr(1, value.size() - 2);
            if (key == "vtk") {
                if (value == "1" || value == "true") from_files.push_back("--vtk");
                continue;
            }
            from_files.push_back("--" + key);
            from_files.push_back(value);
        }
    }

    // The subcommand name is the first non-flag token; keep it in front.
    size_t insert_at = tokens.empty() || tokens[0][0] == '-' ? 0 : 1;
    tokens.insert(tokens.begin() + insert_at, from_files.begin(),
                  from_files.end());
    return tokens;
}

ManifestInfo base_manifest(const std::string& command,
                           const CommonOptions& opt,
                           const SchemeConfig& config) {
    ManifestInfo info;
    info.command = command;
    info.density_spec = AnisotropyDensity::parse(opt.gamma).spec_string();
    info.config = config;
    info.shape_spec = opt.mesh_path.empty() ? opt.shape : std::string();
    info.mesh_path = opt.mesh_path;
    info.t_end = opt.tend;
    info.seed = opt.seed;
    return info;
}

class WallClock {
public:
    double seconds() const {
        return std::chrono::duration<double>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_ =
        std::chrono::steady_clock::now();
};

// Shared driver for evolve, structure, and meshquality, which differ only in
// defaults and in whether degeneracy aborts the run.
int run_series_command(const std::string& command, const CommonOptions& opt,
                       bool stop_on_degenerate, bool write_final_mesh) {
    WallClock clock;
    SchemeConfig config = build_config(opt);
    auto density = AnisotropyDensity::parse(opt.gamma);
    SurfaceMesh mesh = load_geometry(opt);

    ManifestInfo info = base_manifest(command, opt, config);
    info.h = max_edge_length(mesh);
    info.vertex_count = mesh.vertex_count();
    info.triangle_count = mesh.triangle_count();

    Stepper stepper(std::move(mesh), config, density);
    info.stabilizer = stepper.stabilizer();

    EvolutionOptions evo;
    evo.t_end = opt.tend;
    evo.snapshot_stride = opt.snapshot_every;
    if (opt.snapshot_every > 0) evo.snapshot_prefix = out_path(opt, "snap_");
    evo.snapshot_vtk = opt.vtk;
    evo.stop_on_degenerate = stop_on_degenerate;
    evo.log = &std::cerr;
    evo.log_stride = 1000;

    EvolutionResult result = run_evolution(stepper, evo);

    const std::string series = out_path(opt, "series.csv");
    {
        std::ofstream out(series);
        write_series_csv(out, result);
    }
    info.outputs.push_back(series);
    if (write_final_mesh) {
        const std::string final_mesh = out_path(opt, "final.off");
        write_mesh_off(final_mesh, stepper.mesh());
        info.outputs.push_back(final_mesh);
    }
    info.wall_seconds = clock.seconds();
    write_manifest(out_path(opt, "manifest.json"), info);

    if (!result.status.completed()) {
        std::cerr << command << " ended early: " << result.status.outcome
                  << " (" << result.status.detail << ") after "
                  << result.status.steps_taken << " steps at t = "
                  << result.status.final_time << "\n";
        return kExitSolver;
    }
    return 0;
}

int run_converge(const CommonOptions& opt, const std::string& dts_text,
                 int subdivisions) {
    WallClock clock;
    SchemeConfig config = build_config(opt);

    ConvergenceSetup setup;
    setup.scheme = config.scheme;
    setup.bdf_order = config.bdf_order;
    setup.dts = parse_dt_list(dts_text);
    setup.t_end = opt.tend;
    setup.subdivisions = subdivisions;
    setup.stabilizer = config.stabilizer;

    auto density = AnisotropyDensity::parse(opt.gamma);
    ConvergenceTable table = run_convergence(density, setup, &std::cerr);

    const std::string csv = out_path(opt, "convergence.csv");
    {
        std::ofstream out(csv);
        write_convergence_csv(out, table);
    }

    ManifestInfo info = base_manifest("converge", opt, config);
    info.stabilizer = table.stabilizer;
    info.shape_spec = "icosphere:" + std::to_string(subdivisions);
    info.h = table.h;
    info.vertex_count = table.vertex_count;
    info.triangle_count = table.triangle_count;
    info.t_end = setup.t_end;
    info.dts = setup.dts;
    info.outputs.push_back(csv);
    info.wall_seconds = clock.seconds();
    write_manifest(out_path(opt, "manifest.json"), info);

    std::cout << "observed order (pre-saturation mean): "
              << table.presaturation_order() << "\n";
    return 0;
}

int run_shapes(const CommonOptions& opt) {
    SurfaceMesh mesh = generate_shape(opt.shape, opt.h);
    std::string name = opt.shape.substr(0, opt.shape.find(':')) + ".off";
    const std::string path = out_path(opt, name);
    write_mesh_off(path, mesh);
    std::cout << path << ": " << mesh.vertex_count() << " vertices, "
              << mesh.triangle_count() << " triangles, h = "
              << max_edge_length(mesh) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Anisotropic surface diffusion with the minimal-deformation "
                 "tangential velocity"};
    app.require_subcommand(1);

    // The resolution flag --h needs the single-letter name, so help is
    // long-form only.
    app.set_help_flag("--help", "Print help");

    // Repeated options keep the last value, so config-file flags spliced in
    // ahead of the command line are overridden by explicit flags.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    CommonOptions opt;
    std::string dts_text;
    int subdivisions = 5;
    std::string config_dummy;

    auto configure = [&](CLI::App* cmd) {
        cmd->set_help_flag("--help", "Print help");
        add_scheme_options(cmd, opt);
        add_output_options(cmd, opt);
        // Consumed by expand_config_files before parsing; registered here so
        // it shows up in help.
        cmd->add_option("--config", config_dummy,
                        "Config file with key=value lines; flags override");
        return cmd;
    };

    CLI::App* evolve = configure(
        app.add_subcommand("evolve", "Run one evolution and keep the mesh"));
    add_geometry_options(evolve, opt);
    evolve->add_option("--dt", opt.dt, "Time step");
    evolve->add_option("--tend", opt.tend, "End time");

    CLI::App* converge = configure(app.add_subcommand(
        "converge", "Temporal convergence sweep on a fixed icosphere"));
    converge->add_option("--dts", dts_text, "Comma-separated step sizes")
        ->required();
    converge->add_option("--tend", opt.tend, "End time")->default_val(2.0);
    converge->add_option("--subdiv", subdivisions,
                         "Icosphere subdivision count");

    CLI::App* structure = configure(app.add_subcommand(
        "structure", "Per-step conservation and stability diagnostics"));
    add_geometry_options(structure, opt);
    structure->add_option("--dt", opt.dt, "Time step");
    structure->add_option("--tend", opt.tend, "End time");

    CLI::App* meshq = configure(app.add_subcommand(
        "meshquality", "Certify mesh non-degeneration along a run"));
    add_geometry_options(meshq, opt);
    meshq->add_option("--dt", opt.dt, "Time step")->default_val(1e-4);
    meshq->add_option("--tend", opt.tend, "End time")->default_val(1.0);

    CLI::App* shapes =
        app.add_subcommand("shapes", "Generate a mesh and write it as OFF");
    shapes->set_help_flag("--help", "Print help");
    add_geometry_options(shapes, opt);
    shapes->add_option("--out", opt.out_dir, "Output directory");

    try {
        std::vector<std::string> args = expand_config_files(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitConfig : 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (*evolve) return run_series_command("evolve", opt, false, true);
        if (*converge) return run_converge(opt, dts_text, subdivisions);
        if (*structure)
            return run_series_command("structure", opt, false, false);
        if (*meshq) return run_series_command("meshquality", opt, true, false);
        if (*shapes) return run_shapes(opt);
    } catch (const NewtonDiverged& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const PicardDiverged& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const SingularSchurComplement& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const SingularMatrix& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const SingularJacobian& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return 0;
}
