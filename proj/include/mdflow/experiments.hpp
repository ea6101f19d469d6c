// Experiment drivers behind the command-line harness: the expanding-sphere
// benchmark with its manufactured normal-velocity source, temporal
// convergence sweeps on a fixed mesh, and general evolution runs that log
// per-step diagnostics, write snapshots, and classify how the run ended.
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mdflow/anisotropy.hpp"
#include "mdflow/schemes.hpp"

namespace mdflow {

// Reference solution of the forced benchmark: a sphere whose radius follows
// r(t) = (1 + t^3)^(1/4).
struct ExpandingSphere {
    static double radius(double t);
    static double radius_rate(double t);
};

// Source value at direction n (radially mapped to the exact sphere) and time
// t: r'(t) minus the surface Laplacian of the exact chemical potential on
// the radius-r(t) sphere.
double manufactured_forcing_value(const AnisotropyDensity& density,
                                  const Vec3& position, double t);

// The same source packaged for a Stepper.
Stepper::Forcing manufactured_forcing(AnisotropyDensity density);

struct ConvergenceRow {
    double dt = 0.0;
    double error = 0.0;      // max_k | |q_k| - r(T) |
    double order = 0.0;      // log2 ratio against the previous row
    bool saturated = false;  // error dominated by the fixed-mesh floor
};

struct ConvergenceSetup {
    SchemeKind scheme = SchemeKind::md;
    int bdf_order = 1;
    std::vector<double> dts;  // strictly decreasing, each dividing t_end
    double t_end = 2.0;
    int subdivisions = 5;  // icosphere resolution the sweep runs on
    std::optional<double> stabilizer;
};

struct ConvergenceTable {
    std::string density_spec;
    SchemeKind scheme = SchemeKind::md;
    int bdf_order = 1;
    double t_end = 0.0;
    double h = 0.0;  // max edge length of the sweep mesh
    double stabilizer = 0.0;
    long vertex_count = 0;
    long triangle_count = 0;
    std::vector<ConvergenceRow> rows;
    double floor_estimate = 0.0;  // fitted spatial floor of e = C*dt^p + F
    double fitted_order = 0.0;    // fitted p; 0 when too few rows to fit

    // Mean of the row orders over the longest saturation-free prefix.
    double presaturation_order() const;
};

// Fits error = C*dt^p + floor across the rows (least squares in log error,
// floor scanned over [0, min error)) and marks rows saturated where the
// fitted floor exceeds 25% of the row error or the error stagnates between
// neighbours. Tables with fewer than three rows only get the stagnation
// check. Called by run_convergence; exposed for tables built elsewhere.
void flag_saturated_rows(ConvergenceTable& table);

// Integrates the forced benchmark at every requested step size on one fixed
// icosphere and tabulates errors, observed orders, and saturation flags.
// Progress lines go to `log` when given.
ConvergenceTable run_convergence(const AnisotropyDensity& density,
                                 const ConvergenceSetup& setup,
                                 std::ostream* log = nullptr);

struct RunStatus {
    // "completed", "degenerate", or the failure kind of the exception that
    // ended the run ("diverged", "singular", "collapsed").
    std::string outcome = "completed";
    std::string detail;
    long steps_taken = 0;
    double final_time = 0.0;

    bool completed() const { return outcome == "completed"; }
};

struct EvolutionOptions {
    // Stop after this time; the stepper's own dt decides the step count.
    double t_end = 0.0;
    // Write an OFF snapshot every `snapshot_stride` steps into
    // `snapshot_prefix` + step index + ".off" (0 disables). VTK copies are
    // written alongside when `snapshot_vtk` is set.
    int snapshot_stride = 0;
    std::string snapshot_prefix;
    bool snapshot_vtk = false;
    // End the run with outcome "degenerate" as soon as the quality report
    // counts a degenerate triangle.
    bool stop_on_degenerate = false;
    // Progress line cadence on `log` (0 disables).
    int log_stride = 0;
    std::ostream* log = nullptr;
};

struct EvolutionResult {
    std::vector<StepReport> reports;
    RunStatus status;
    double initial_volume = 0.0;
    double initial_energy = 0.0;
    double initial_R = 0.0;
};

// Advances the stepper until t_end, collecting every report. Solver errors
// end the run with a classified status instead of propagating, so partial
// series can still be written.
EvolutionResult run_evolution(Stepper& stepper, const EvolutionOptions& opts);

// Writers. All floating-point values use 17 significant digits so identical
// runs produce identical bytes.
void write_convergence_csv(std::ostream& out, const ConvergenceTable& table);
void write_series_csv(std::ostream& out, const EvolutionResult& result);

// Run manifest as a JSON file: configuration, mesh resolution and counts,
// the stabilizer in effect, and wall time.
struct ManifestInfo {
    std::string command;
    std::string density_spec;
    SchemeConfig config;
    double stabilizer = 0.0;
    std::string shape_spec;   // empty when a mesh file was loaded
    std::string mesh_path;    // empty when a generator was used
    double h = 0.0;
    long vertex_count = 0;
    long triangle_count = 0;
    double t_end = 0.0;
    std::vector<double> dts;  // convergence sweeps only
    long seed = 0;
    double wall_seconds = 0.0;
    std::vector<std::string> outputs;
};

void write_manifest(const std::string& path, const ManifestInfo& info);

}  // namespace mdflow
