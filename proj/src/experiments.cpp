#include "mdflow/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <utility>

#include <json.hpp>

#include "mdflow/errors.hpp"
#include "mdflow/mesh_io.hpp"
#include "mdflow/shapes.hpp"

namespace mdflow {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

double ExpandingSphere::radius(double t) {
    return std::pow(1.0 + t * t * t, 0.25);
}

double ExpandingSphere::radius_rate(double t) {
    return 0.75 * t * t * std::pow(1.0 + t * t * t, -0.75);
}

double manufactured_forcing_value(const AnisotropyDensity& density,
                                  const Vec3& position, double t) {
    // The source is evaluated on the exact sphere: only the direction of the
    // vertex enters, so numerical error in the radius never feeds back.
    const Vec3 n = position.normalized();
    const double r = ExpandingSphere::radius(t);
    return ExpandingSphere::radius_rate(t) -
           density.sphere_laplacian_div_xi(n) / (r * r * r);
}

Stepper::Forcing manufactured_forcing(AnisotropyDensity density) {
    return [density = std::move(density)](const Vec3& q, double t) {
        return manufactured_forcing_value(density, q, t);
    };
}

double ConvergenceTable::presaturation_order() const {
    double sum = 0.0;
    int count = 0;
    for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i - 1].saturated || rows[i].saturated) break;
        sum += rows[i].order;
        ++count;
    }
    return count ? sum / count : 0.0;
}

void flag_saturated_rows(ConvergenceTable& table) {
    std::vector<ConvergenceRow>& rows = table.rows;
    table.floor_estimate = 0.0;
    table.fitted_order = 0.0;
    for (size_t i = 1; i < rows.size(); ++i)
        rows[i].saturated = std::abs(rows[i - 1].error - rows[i].error) <
                            0.2 * std::max(rows[i - 1].error, rows[i].error);
    if (rows.size() < 3) return;

    double min_error = rows[0].error;
    for (const ConvergenceRow& row : rows)
        min_error = std::min(min_error, row.error);
    if (!(min_error > 0.0)) return;

    // Least squares of log(error - floor) against log dt for a candidate
    // floor; returns the residual sum and the slope (the fitted order).
    const size_t n = rows.size();
    auto fit = [&](double floor, double* slope_out) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const ConvergenceRow& row : rows) {
            double x = std::log(row.dt);
            double y = std::log(row.error - floor);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        double denom = n * sxx - sx * sx;
        if (!(denom > 1e-30)) return std::numeric_limits<double>::infinity();
        double slope = (n * sxy - sx * sy) / denom;
        double intercept = (sy - slope * sx) / n;
        double sse = 0;
        for (const ConvergenceRow& row : rows) {
            double r = std::log(row.error - floor) -
                       (intercept + slope * std::log(row.dt));
            sse += r * r;
        }
        *slope_out = slope;
        return sse;
    };

    // Scan the floor as a fraction of the smallest error, coarse then fine.
    double best_f = 0.0, best_sse = std::numeric_limits<double>::infinity();
    double best_slope = 0.0;
    auto scan = [&](double lo, double hi, int points) {
        for (int i = 0; i < points; ++i) {
            double f = lo + (hi - lo) * i / (points - 1);
            double slope = 0;
            double sse = fit(f * min_error, &slope);
            if (sse < best_sse) {
                best_sse = sse;
                best_f = f;
                best_slope = slope;
            }
        }
    };
    scan(0.0, 0.99, 100);
    scan(std::max(0.0, best_f - 0.01), std::min(0.99, best_f + 0.01), 101);
    if (!std::isfinite(best_sse)) return;

    table.floor_estimate = best_f * min_error;
    table.fitted_order = best_slope;
    for (ConvergenceRow& row : rows)
        if (table.floor_estimate > 0.25 * row.error) row.saturated = true;
}

ConvergenceTable run_convergence(const AnisotropyDensity& density,
                                 const ConvergenceSetup& setup,
                                 std::ostream* log) {
    if (setup.dts.empty()) throw Error("convergence sweep needs step sizes");
    if (!(setup.t_end > 0.0)) throw Error("end time must be positive");
    for (size_t i = 0; i < setup.dts.size(); ++i) {
        double dt = setup.dts[i];
        if (!(dt > 0.0)) throw Error("step sizes must be positive");
        if (i > 0 && dt >= setup.dts[i - 1])
            throw Error("step sizes must be strictly decreasing");
        double ratio = setup.t_end / dt;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
            throw Error("step size " + fmt(dt) + " does not divide the end "
                        "time " + fmt(setup.t_end));
    }

    SurfaceMesh mesh = generate_icosphere(setup.subdivisions);
    {
        // Start on the exact initial sphere of the benchmark (radius 1).
        VectorField scaled = mesh.vertices();
        for (Vec3& q : scaled) q.normalize();
        mesh = SurfaceMesh::create(scaled, mesh.triangles());
    }

    ConvergenceTable table;
    table.density_spec = density.spec_string();
    table.scheme = setup.scheme;
    table.bdf_order = setup.bdf_order;
    table.t_end = setup.t_end;
    table.h = max_edge_length(mesh);
    table.vertex_count = mesh.vertex_count();
    table.triangle_count = mesh.triangle_count();

    const double target_radius = ExpandingSphere::radius(setup.t_end);
    for (double dt : setup.dts) {
        SchemeConfig config;
        config.scheme = setup.scheme;
        config.bdf_order = setup.bdf_order;
        config.dt = dt;
        config.stabilizer = setup.stabilizer;
        Stepper stepper(mesh, config, density, manufactured_forcing(density));
        table.stabilizer = stepper.stabilizer();

        StepReport report;
        report.time = stepper.state().time;
        while (report.time < setup.t_end - 1e-9) report = stepper.advance();
        if (std::abs(report.time - setup.t_end) > 1e-6)
            throw Error("sweep landed at t = " + fmt(report.time) +
                        " instead of " + fmt(setup.t_end));

        ConvergenceRow row;
        row.dt = dt;
        for (const Vec3& q : stepper.mesh().vertices())
            row.error =
                std::max(row.error, std::abs(q.norm() - target_radius));
        if (!table.rows.empty()) {
            const ConvergenceRow& prev = table.rows.back();
            row.order = std::log2(prev.error / row.error);
        }
        table.rows.push_back(row);
        if (log)
            *log << "dt=" << fmt(dt) << " error=" << fmt(row.error)
                 << (table.rows.size() > 1 ? " order=" + fmt(row.order)
                                           : std::string())
                 << std::endl;
    }
    flag_saturated_rows(table);
    if (log)
        *log << "floor=" << fmt(table.floor_estimate)
             << " fitted_order=" << fmt(table.fitted_order)
             << " presaturation_order=" << fmt(table.presaturation_order())
             << std::endl;
    return table;
}

EvolutionResult run_evolution(Stepper& stepper, const EvolutionOptions& opts) {
    EvolutionResult result;
    result.initial_volume = stepper.initial_volume();
    result.initial_energy = stepper.initial_energy();
    result.initial_R = stepper.state().R;

    auto snapshot = [&](const StepReport& report) {
        if (!opts.snapshot_stride || opts.snapshot_prefix.empty()) return;
        if (report.step_index % opts.snapshot_stride != 0) return;
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), "%06ld.off", report.step_index);
        write_mesh_off(opts.snapshot_prefix + suffix, stepper.mesh());
        if (opts.snapshot_vtk) {
            std::snprintf(suffix, sizeof(suffix), "%06ld.vtk",
                          report.step_index);
            write_mesh_vtk(opts.snapshot_prefix + suffix, stepper.mesh(),
                           {{"mu", &stepper.state().mu}});
        }
    };

    double time = stepper.state().time;
    while (time < opts.t_end - 1e-9) {
        try {
            StepReport report = stepper.advance();
            time = report.time;
            result.reports.push_back(report);
            snapshot(report);
            if (opts.log && opts.log_stride &&
                result.reports.size() % opts.log_stride == 0)
                *opts.log << "step " << report.step_index << " t=" << fmt(time)
                          << " dV=" << fmt(report.rel_volume_loss)
                          << " W/W0=" << fmt(report.normalized_energy)
                          << std::endl;
            if (opts.stop_on_degenerate &&
                report.mesh_quality.degenerate_count > 0) {
                result.status.outcome = "degenerate";
                result.status.detail =
                    std::to_string(report.mesh_quality.degenerate_count) +
                    " degenerate triangles at t = " + fmt(time);
                break;
            }
        } catch (const NewtonDiverged& e) {
            result.status = {"diverged", e.what()};
            break;
        } catch (const PicardDiverged& e) {
            result.status = {"diverged", e.what()};
            break;
        } catch (const SingularSchurComplement& e) {
            result.status = {"singular", e.what()};
            break;
        } catch (const SingularMatrix& e) {
            result.status = {"singular", e.what()};
            break;
        } catch (const SingularJacobian& e) {
            result.status = {"collapsed", e.what()};
            break;
        } catch (const DegenerateTriangle& e) {
            result.status = {"collapsed", e.what()};
            break;
        } catch (const ZeroAveragedNormal& e) {
            result.status = {"collapsed", e.what()};
            break;
        }
    }
    result.status.steps_taken = static_cast<long>(result.reports.size());
    result.status.final_time = time;
    return result;
}

void write_convergence_csv(std::ostream& out, const ConvergenceTable& table) {
    out << "# converge scheme=" << scheme_name(table.scheme)
        << " bdf=" << table.bdf_order << " gamma=" << table.density_spec
        << " tend=" << fmt(table.t_end) << "\n";
    out << "# mesh vertices=" << table.vertex_count
        << " triangles=" << table.triangle_count << " h=" << fmt(table.h)
        << " stabilizer=" << fmt(table.stabilizer) << "\n";
    out << "dt,error,order,saturated\n";
    for (size_t i = 0; i < table.rows.size(); ++i) {
        const ConvergenceRow& row = table.rows[i];
        out << fmt(row.dt) << ',' << fmt(row.error) << ',';
        if (i > 0) out << fmt(row.order);
        out << ',' << (row.saturated ? 1 : 0) << "\n";
    }
}

void write_series_csv(std::ostream& out, const EvolutionResult& result) {
    out << "step,t,volume,rel_volume_loss,energy,normalized_energy,R,"
           "R_over_R0,zeta,eta,lambda,varrho,newton_iters,picard_iters,"
           "min_angle,max_min_area_ratio,max_edge_ratio,degenerate_count\n";
    for (const StepReport& r : result.reports) {
        const double r_ratio =
            result.initial_R != 0.0 ? r.R / result.initial_R : 1.0;
        out << r.step_index << ',' << fmt(r.time) << ',' << fmt(r.volume)
            << ',' << fmt(r.rel_volume_loss) << ',' << fmt(r.energy) << ','
            << fmt(r.normalized_energy) << ',' << fmt(r.R) << ','
            << fmt(r_ratio) << ',' << fmt(r.zeta) << ',' << fmt(r.eta) << ','
            << fmt(r.lambda) << ',' << fmt(r.varrho) << ',' << r.newton_iters
            << ',' << r.picard_iters << ',' << fmt(r.mesh_quality.min_angle)
            << ',' << fmt(r.mesh_quality.max_min_area_ratio) << ','
            << fmt(r.mesh_quality.max_edge_ratio) << ','
            << r.mesh_quality.degenerate_count << "\n";
    }
    out << "status," << result.status.outcome << ','
        << csv_quote(result.status.detail)
        << ",steps=" << result.status.steps_taken
        << ",t=" << fmt(result.status.final_time) << "\n";
}

void write_manifest(const std::string& path, const ManifestInfo& info) {
    nlohmann::json j;
    j["command"] = info.command;
    j["gamma"] = info.density_spec;
    j["scheme"] = scheme_name(info.config.scheme);
    j["bdf"] = info.config.bdf_order;
    j["dt"] = info.config.dt;
    if (!info.dts.empty()) j["dts"] = info.dts;
    j["tend"] = info.t_end;
    j["sav_exponent"] = info.config.sav_exponent;
    j["sav_shift"] = info.config.sav_shift;
    j["newton_tol"] = info.config.newton_tol;
    j["picard_tol"] = info.config.picard_tol;
    j["bootstrap_substeps"] = info.config.bootstrap_substeps;
    j["stabilizer"] = info.stabilizer;
    if (!info.shape_spec.empty()) j["shape"] = info.shape_spec;
    if (!info.mesh_path.empty()) j["mesh"] = info.mesh_path;
    j["h"] = info.h;
    j["vertices"] = info.vertex_count;
    j["triangles"] = info.triangle_count;
    j["seed"] = info.seed;
    j["wall_seconds"] = info.wall_seconds;
    j["outputs"] = info.outputs;
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path);
    out << j.dump(2) << "\n";
}

}  // namespace mdflow
