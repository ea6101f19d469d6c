#include "mdflow/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mdflow/errors.hpp"
#include "mdflow/linalg.hpp"

namespace mdflow {

namespace {

constexpr int kMaxOrder = 4;

}  // namespace

BdfCoefficients BdfCoefficients::of_order(int k) {
    switch (k) {
        case 1:
            return {1, 1.0, {1.0}};
        case 2:
            return {2, 1.5, {2.0, -0.5}};
        case 3:
            return {3, 11.0 / 6.0, {3.0, -1.5, 1.0 / 3.0}};
        case 4:
            return {4, 25.0 / 12.0, {4.0, -3.0, 4.0 / 3.0, -0.25}};
        default:
            throw Error("backward-differentiation order must be 1..4, got " +
                        std::to_string(k));
    }
}

const char* scheme_name(SchemeKind kind) {
    switch (kind) {
        case SchemeKind::md: return "md";
        case SchemeKind::vc_md: return "vc-md";
        case SchemeKind::sav_md: return "sav-md";
        case SchemeKind::vc_sav_md: return "vc-sav-md";
        case SchemeKind::es_lm: return "es-lm";
        case SchemeKind::vc_lm: return "vc-lm";
        case SchemeKind::sp_lm: return "sp-lm";
        case SchemeKind::lm_sav: return "lm-sav";
    }
    return "md";
}

SchemeKind parse_scheme(const std::string& name) {
    for (SchemeKind kind :
         {SchemeKind::md, SchemeKind::vc_md, SchemeKind::sav_md,
          SchemeKind::vc_sav_md, SchemeKind::es_lm, SchemeKind::vc_lm,
          SchemeKind::sp_lm, SchemeKind::lm_sav})
        if (name == scheme_name(kind)) return kind;
    throw ParseError(
        "unknown scheme '" + name +
        "'; expected one of md, vc-md, sav-md, vc-sav-md, es-lm, vc-lm, "
        "sp-lm, lm-sav");
}

bool SchemeConfig::uses_sav() const {
    return scheme == SchemeKind::sav_md || scheme == SchemeKind::vc_sav_md ||
           scheme == SchemeKind::lm_sav;
}

bool SchemeConfig::uses_newton() const {
    return scheme == SchemeKind::es_lm || scheme == SchemeKind::vc_lm ||
           scheme == SchemeKind::sp_lm || scheme == SchemeKind::lm_sav;
}

std::vector<std::string> SchemeConfig::validate() {
    std::vector<std::string> warnings;
    if (bdf_order < 1 || bdf_order > kMaxOrder)
        throw Error("bdf order must be 1..4, got " + std::to_string(bdf_order));
    if (!(dt > 0.0)) throw Error("time step must be positive");
    if (!(newton_tol > 0.0) || !(picard_tol > 0.0))
        throw Error("solver tolerances must be positive");
    if (max_newton_iters < 1 || max_picard_iters < 1)
        throw Error("iteration limits must be at least 1");
    if (bootstrap_substeps < 0)
        throw Error("bootstrap substep count cannot be negative");
    if (stabilizer && *stabilizer < 0.0)
        throw Error("stabilizer cannot be negative");

    if ((scheme == SchemeKind::vc_md || scheme == SchemeKind::vc_sav_md) &&
        bdf_order != 1) {
        warnings.push_back(std::string(scheme_name(scheme)) +
                           " runs at order 1; requested order " +
                           std::to_string(bdf_order) + " is ignored");
        bdf_order = 1;
    }
    if ((scheme == SchemeKind::es_lm || scheme == SchemeKind::sp_lm) &&
        bdf_order > 2)
        warnings.push_back(
            std::string(scheme_name(scheme)) +
            ": monotone energy decay is only guaranteed at orders 1 and 2");
    if (uses_sav()) {
        if (sav_exponent == 0) sav_exponent = bdf_order + 1;
        if (sav_exponent < bdf_order + 1)
            throw Error("auxiliary-variable exponent must be at least order+1 ("
                        + std::to_string(bdf_order + 1) + "), got " +
                        std::to_string(sav_exponent));
        if (!(sav_shift > 0.0))
            throw Error("auxiliary-energy shift must be positive");
        if (sav_shift < 1.0)
            warnings.push_back(
                "auxiliary-energy shift below 1 weakens the energy bound");
    }
    return warnings;
}

SavUpdate sav_scalar_update(double R_prev, double shifted_energy,
                            double gradient_term, double dt, int r) {
    SavUpdate out;
    out.R = R_prev * shifted_energy / (shifted_energy + dt * gradient_term);
    out.zeta = out.R / shifted_energy;
    out.eta = 1.0 - std::pow(1.0 - out.zeta, r);
    return out;
}

VectorField energy_gradient(const SurfaceMesh& mesh,
                            const SurfaceGeometry& geom,
                            const AnisotropyDensity& density) {
    VectorField grad(mesh.vertex_count(), Vec3::Zero());
    for (Index l = 0; l < mesh.triangle_count(); ++l) {
        const Triangle& t = mesh.triangles()[l];
        const Vec3& n = geom.normals[l];
        double g = density.gamma(n);
        Vec3 xi = density.xi(n);
        for (int i = 0; i < 3; ++i) {
            const Vec3& gi = geom.basis_gradients[l][i];
            grad[t[i]] += geom.areas[l] * (g * gi - n * xi.dot(gi));
        }
    }
    return grad;
}

VectorField volume_gradient(const SurfaceMesh& mesh,
                            const SurfaceGeometry& geom) {
    std::vector<Vec3> normals(geom.normals.begin(), geom.normals.end());
    return vertex_lumped_vectors(normals, mesh, geom);
}

// Geometry, Jacobians, and anisotropy matrices of the surface a linear
// system is assembled on.
struct Stepper::SurfaceData {
    SurfaceMesh mesh;
    SurfaceGeometry geom;
    std::vector<ElementJacobian> jacs;
    std::vector<Mat3> z;
};

namespace {

// Sections of the value array emitted for the coupled system, in emission
// order. The layout is fixed so one AssemblyPlan serves every step.
enum Section : int {
    kFlowChi = 0,     // (alpha/dt) lumped pairing of chi against the flow vectors
    kFlowMu,          // stiffness of mu
    kFlowMuDiag,      // multiplier coupling -lambda^n (mu, phi)^h
    kCurvChi,         // -(Z grad chi, grad (v phi)) block
    kCurvMuDiag,      // lumped mass of mu
    kHarmonicChi,     // pullback stiffness of chi
    kHarmonicKappa,   // lumped kappa coupling
    kSectionCount,
};

struct SystemLayout {
    Index k = 0;
    Index chi(Index vertex, int comp) const { return comp * k + vertex; }
    Index mu(Index vertex) const { return 3 * k + vertex; }
    Index kappa(Index vertex) const { return 4 * k + vertex; }
    Index rows_flow(Index vertex) const { return vertex; }
    Index rows_curv(Index vertex) const { return k + vertex; }
    Index rows_harm(Index vertex, int comp) const {
        return 2 * k + comp * k + vertex;
    }
    Index size() const { return 5 * k; }
};

std::vector<double> flatten_fields(const VectorField& chi,
                                   const ScalarField& mu,
                                   const ScalarField& kappa,
                                   const SystemLayout& lay) {
    std::vector<double> y(static_cast<size_t>(lay.size()));
    for (Index i = 0; i < lay.k; ++i) {
        for (int c = 0; c < 3; ++c) y[lay.chi(i, c)] = chi[i][c];
        y[lay.mu(i)] = mu[i];
        y[lay.kappa(i)] = kappa[i];
    }
    return y;
}

double max_abs(const std::vector<double>& v, size_t begin, size_t end) {
    double worst = 0.0;
    for (size_t i = begin; i < end; ++i) worst = std::max(worst, std::abs(v[i]));
    return worst;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

// Cached sparsity pattern plus reusable value and matrix storage.
struct Stepper::AssemblyCache {
    SystemLayout layout;
    std::optional<AssemblyPlan> plan;
    std::vector<double> values;
    std::array<size_t, kSectionCount + 1> section{};
    SparseMatrix matrix;

    // Emits every block value for the given surface in the fixed order.
    // `flow_vectors` are the per-vertex pairing vectors of the flow row
    // (unit averaged normals, or time-weighted means divided by the lumped
    // area), `alpha_over_dt` scales that block, and `lm_mu_coeff` fills the
    // multiplier diagonal (zero outside Newton sweeps).
    void emit(const SurfaceData& s, const VectorField& flow_vectors,
              double alpha_over_dt, double lm_mu_coeff,
              std::vector<std::pair<Index, Index>>* structure) {
        const Index k = layout.k;
        values.clear();
        section[0] = 0;
        emit_weighted_normal_mass(s.mesh, s.geom, flow_vectors,
                                  {structure, &values, 0, 0});
        section[1] = values.size();
        TripletSink flow_mu{structure, &values, 0, 3 * k};
        emit_laplacian(s.mesh, s.geom, flow_mu);
        section[2] = values.size();
        for (Index i = 0; i < k; ++i)
            flow_mu.push(i, i, lm_mu_coeff * s.geom.lumped_areas[i]);
        section[3] = values.size();
        emit_anisotropic_block(s.mesh, s.geom, s.z, s.geom.vertex_normals,
                               {structure, &values, k, 0});
        section[4] = values.size();
        TripletSink curv_mu{structure, &values, k, 3 * k};
        for (Index i = 0; i < k; ++i)
            curv_mu.push(i, i, s.geom.lumped_areas[i]);
        section[5] = values.size();
        emit_harmonic_stiffness(s.mesh, s.geom, s.jacs,
                                {structure, &values, 2 * k, 0});
        section[6] = values.size();
        emit_harmonic_coupling(s.mesh, s.geom, s.jacs, s.geom.vertex_normals,
                               {structure, &values, 2 * k, 4 * k});
        section[kSectionCount] = values.size();

        for (size_t i = section[kFlowChi]; i < section[kFlowChi + 1]; ++i)
            values[i] *= alpha_over_dt;
        for (size_t i = section[kCurvChi]; i < section[kCurvChi + 1]; ++i)
            values[i] = -values[i];
    }

    void assemble() { plan->assemble_into(values, matrix); }
};

Stepper::Stepper(SurfaceMesh initial, SchemeConfig config,
                 AnisotropyDensity density, Forcing forcing)
    : mesh_(std::move(initial)),
      config_(std::move(config)),
      density_(std::move(density)),
      forcing_(std::move(forcing)) {
    config_.validate();
    stabilizer_ = config_.stabilizer ? *config_.stabilizer
                                     : default_stabilizer(density_);

    cache_ = std::make_unique<AssemblyCache>();
    cache_->layout.k = mesh_.vertex_count();

    SurfaceData data = make_surface_data(mesh_.vertices());
    std::vector<std::pair<Index, Index>> structure;
    cache_->emit(data, data.geom.vertex_normals, 1.0, 0.0, &structure);
    cache_->plan.emplace(cache_->layout.size(), cache_->layout.size(),
                         structure);

    initial_volume_ = enclosed_volume(mesh_);
    initial_energy_ = surface_energy(mesh_, density_);
    state_.history.push_front(mesh_.vertices());
    if (config_.uses_sav())
        state_.R = initial_energy_ + config_.sav_shift;
    init_mu_kappa();

    history_capacity_ = 1;
    bootstrap();
    history_capacity_ = static_cast<size_t>(config_.bdf_order);
}

Stepper::~Stepper() = default;
Stepper::Stepper(Stepper&&) noexcept = default;

Stepper::SurfaceData Stepper::make_surface_data(
    const VectorField& positions) const {
    SurfaceData data{mesh_.with_vertices(positions), {}, {}, {}};
    data.geom = build_geometry(data.mesh);
    data.jacs = build_jacobians(data.mesh, data.geom);
    data.z.reserve(data.geom.normals.size());
    for (const Vec3& n : data.geom.normals)
        data.z.push_back(density_.stabilized_matrix(n, stabilizer_));
    return data;
}

void Stepper::init_mu_kappa() {
    SurfaceData data = make_surface_data(mesh_.vertices());
    const Index k = mesh_.vertex_count();
    auto block = assemble_anisotropic_block(data.mesh, data.geom, data.z,
                                            data.geom.vertex_normals);
    std::vector<double> x(3 * static_cast<size_t>(k));
    for (Index i = 0; i < k; ++i)
        for (int c = 0; c < 3; ++c)
            x[c * k + i] = mesh_.vertices()[i][c];
    auto zread = block.multiply(x);
    state_.mu.assign(k, 0.0);
    for (Index i = 0; i < k; ++i)
        state_.mu[i] = zread[i] / data.geom.lumped_areas[i];

    auto lap = assemble_laplacian(data.mesh, data.geom);
    state_.kappa.assign(k, 0.0);
    for (int c = 0; c < 3; ++c) {
        ScalarField comp(k);
        for (Index i = 0; i < k; ++i) comp[i] = mesh_.vertices()[i][c];
        auto lc = lap.multiply(comp);
        for (Index i = 0; i < k; ++i)
            state_.kappa[i] -= data.geom.vertex_normals[i][c] * lc[i] /
                               data.geom.lumped_areas[i];
    }
}

void Stepper::bootstrap() {
    const int order = config_.bdf_order;
    if (order == 1) return;

    int nsub = config_.bootstrap_substeps;
    if (nsub == 0) {
        double ratio = std::pow(config_.dt, 2.0 - order);
        if (ratio > 1e5)
            throw Error(
                "automatic bootstrap would need " + std::to_string(ratio) +
                " substeps per step; set bootstrap_substeps explicitly");
        nsub = std::max<long>(1, std::llround(ratio));
    }
    bootstrap_substeps_used_ = nsub;
    const double sub_dt = config_.dt / nsub;

    std::vector<VectorField> macro;
    macro.push_back(mesh_.vertices());
    for (int d = 1; d < order; ++d) {
        for (int s = 0; s < nsub; ++s) step_once(1, sub_dt);
        macro.push_back(mesh_.vertices());
    }
    state_.history.clear();
    for (auto it = macro.rbegin(); it != macro.rend(); ++it)
        state_.history.push_back(std::move(*it));
    state_.step_index = order - 1;
    state_.time = (order - 1) * config_.dt;
}

VectorField Stepper::predictor_for(int order, double step, double t_target) {
    if (order == 1) return state_.history.front();
    VectorField predicted = predictor_for(order - 1, step, t_target);
    return linear_md_solve(predicted, order - 1, step, t_target).positions;
}

VectorField Stepper::predictor_positions() {
    return predictor_for(config_.bdf_order, config_.dt,
                         state_.time + config_.dt);
}

std::vector<double> Stepper::flow_rhs(const SurfaceData& data,
                                      const VectorField& flow_vectors,
                                      int order, double step,
                                      double t_target) const {
    const SystemLayout& lay = cache_->layout;
    auto coeffs = BdfCoefficients::of_order(order);
    std::vector<double> rhs(static_cast<size_t>(lay.size()), 0.0);
    for (Index i = 0; i < lay.k; ++i) {
        Vec3 acc = Vec3::Zero();
        for (int d = 0; d < order; ++d)
            acc += coeffs.history_weights[d] * state_.history[d][i];
        double mass = data.geom.lumped_areas[i] / step;
        rhs[lay.rows_flow(i)] = mass * flow_vectors[i].dot(acc);
        if (forcing_)
            rhs[lay.rows_flow(i)] +=
                data.geom.lumped_areas[i] *
                forcing_(data.mesh.vertices()[i], t_target);
    }
    return rhs;
}

Stepper::LinearSolution Stepper::unflatten(
    const std::vector<double>& y) const {
    const SystemLayout& lay = cache_->layout;
    LinearSolution out;
    out.positions.resize(lay.k);
    out.mu.resize(lay.k);
    out.kappa.resize(lay.k);
    for (Index i = 0; i < lay.k; ++i) {
        for (int c = 0; c < 3; ++c) out.positions[i][c] = y[lay.chi(i, c)];
        out.mu[i] = y[lay.mu(i)];
        out.kappa[i] = y[lay.kappa(i)];
    }
    return out;
}

Stepper::LinearSolution Stepper::linear_md_solve(const VectorField& predicted,
                                                 int order, double step,
                                                 double t_target) {
    SurfaceData data = make_surface_data(predicted);
    auto coeffs = BdfCoefficients::of_order(order);
    cache_->emit(data, data.geom.vertex_normals, coeffs.alpha / step, 0.0,
                 nullptr);
    cache_->assemble();
    auto rhs = flow_rhs(data, data.geom.vertex_normals, order, step, t_target);
    return unflatten(solve(cache_->matrix, rhs));
}

Stepper::LinearSolution Stepper::picard_vc_solve(double step, int* iters_out) {
    const VectorField& current = state_.history.front();
    SurfaceData data = make_surface_data(current);
    const Index k = cache_->layout.k;
    const Index nl = data.mesh.triangle_count();

    VectorField chi = current;
    VectorField mid(current.size());
    std::vector<Vec3> half_normals(static_cast<size_t>(nl));
    LinearSolution solution;
    for (int sweep = 0; sweep < config_.max_picard_iters; ++sweep) {
        for (Index i = 0; i < k; ++i) mid[i] = 0.5 * (current[i] + chi[i]);
        for (Index l = 0; l < nl; ++l)
            half_normals[static_cast<size_t>(l)] =
                time_weighted_normal(data.mesh, mid, chi, l);
        VectorField weighted =
            vertex_lumped_vectors(half_normals, data.mesh, data.geom);
        VectorField flow_vectors(weighted.size());
        for (Index i = 0; i < k; ++i)
            flow_vectors[i] = weighted[i] / data.geom.lumped_areas[i];

        cache_->emit(data, flow_vectors, 1.0 / step, 0.0, nullptr);
        cache_->assemble();
        auto rhs = flow_rhs(data, flow_vectors, 1, step, state_.time + step);
        solution = unflatten(solve(cache_->matrix, rhs));

        double delta = 0.0;
        for (Index i = 0; i < k; ++i)
            delta = std::max(delta,
                             (solution.positions[i] - chi[i])
                                 .cwiseAbs()
                                 .maxCoeff());
        chi = solution.positions;
        if (!std::isfinite(delta))
            throw PicardDiverged("time-weighted normal iteration produced "
                                 "non-finite positions");
        if (delta <= config_.picard_tol) {
            if (iters_out) *iters_out = sweep + 1;
            return solution;
        }
    }
    throw PicardDiverged("time-weighted normal iteration did not reach " +
                         std::to_string(config_.picard_tol) + " in " +
                         std::to_string(config_.max_picard_iters) +
                         " sweeps");
}

Stepper::LinearSolution Stepper::newton_lm_solve(const VectorField& predicted,
                                                 int order, double step,
                                                 bool with_energy,
                                                 bool with_volume,
                                                 StepReport& report) {
    SurfaceData data = make_surface_data(predicted);
    const SystemLayout& lay = cache_->layout;
    const Index k = lay.k;
    auto coeffs = BdfCoefficients::of_order(order);

    // History functionals entering the constraint right-hand sides.
    double weighted_energy = 0.0;
    double weighted_volume = 0.0;
    for (int d = 0; d < order; ++d) {
        SurfaceMesh hist_mesh = mesh_.with_vertices(state_.history[d]);
        if (with_energy)
            weighted_energy += coeffs.history_weights[d] *
                               surface_energy(hist_mesh, density_);
        if (with_volume)
            weighted_volume +=
                coeffs.history_weights[d] * enclosed_volume(hist_mesh);
    }

    auto stiffness = assemble_laplacian(data.mesh, data.geom);
    auto rhs_lin = flow_rhs(data, data.geom.vertex_normals, order, step,
                            state_.time + step);

    VectorField chi = state_.history.front();
    ScalarField mu = state_.mu;
    ScalarField kappa = state_.kappa;
    double lambda = state_.lambda;
    double varrho = state_.varrho;

    if (with_energy && with_volume) {
        // Near equilibrium the two constraint rows become collinear and the
        // Schur system degenerates; detect the uniform chemical potential
        // before descending into an unsolvable sweep.
        double mean = 0.0;
        for (double v : mu) mean += v;
        mean /= static_cast<double>(k);
        double var = 0.0;
        for (double v : mu) var += (v - mean) * (v - mean);
        double sd = std::sqrt(var / std::max<Index>(1, k - 1));
        if (sd < 1e-8 * std::abs(mean))
            throw SingularSchurComplement(
                "both multiplier constraints are active but the nodal "
                "chemical potential is numerically uniform (sd " +
                std::to_string(sd) + " vs mean " + std::to_string(mean) +
                "); the two constraint rows are linearly dependent at "
                "equilibrium");
    }

    // Case without the energy multiplier: the core matrix and the border
    // column are iterate-independent, so factor once and reuse.
    std::optional<BorderedSolver> fixed_solver;
    std::vector<double> varrho_col;
    if (!with_energy) {
        cache_->emit(data, data.geom.vertex_normals, coeffs.alpha / step, 0.0,
                     nullptr);
        cache_->assemble();
        varrho_col.assign(static_cast<size_t>(lay.size()), 0.0);
        for (Index i = 0; i < k; ++i)
            varrho_col[lay.rows_flow(i)] = -data.geom.lumped_areas[i];
        fixed_solver.emplace(cache_->matrix, std::vector<std::vector<double>>{
                                                 varrho_col});
    }

    report.newton_updates.clear();
    for (int sweep = 0; sweep < config_.max_newton_iters; ++sweep) {
        SurfaceMesh it_mesh = mesh_.with_vertices(chi);
        SurfaceGeometry it_geom = build_geometry(it_mesh);

        if (with_energy) {
            cache_->emit(data, data.geom.vertex_normals, coeffs.alpha / step,
                         -lambda, nullptr);
            cache_->assemble();
        }

        auto y = flatten_fields(chi, mu, kappa, lay);
        auto residual = cache_->matrix.multiply(y);
        for (size_t i = 0; i < residual.size(); ++i) residual[i] -= rhs_lin[i];
        if (with_volume)
            for (Index i = 0; i < k; ++i)
                residual[lay.rows_flow(i)] -=
                    varrho * data.geom.lumped_areas[i];

        auto grad_mu = stiffness.multiply(mu);
        std::vector<std::vector<double>> rows;
        std::vector<std::vector<double>> cols;
        std::vector<double> tails;
        if (with_energy) {
            double energy_it = surface_energy(it_mesh, density_);
            KahanSum dissipation;
            for (Index i = 0; i < k; ++i) dissipation.add(mu[i] * grad_mu[i]);
            double res_energy =
                (coeffs.alpha * energy_it - weighted_energy) / step +
                dissipation.value();

            std::vector<double> row(static_cast<size_t>(lay.size()), 0.0);
            VectorField dw = energy_gradient(it_mesh, it_geom, density_);
            for (Index i = 0; i < k; ++i) {
                for (int c = 0; c < 3; ++c)
                    row[lay.chi(i, c)] = coeffs.alpha / step * dw[i][c];
                row[lay.mu(i)] = 2.0 * grad_mu[i];
            }
            std::vector<double> col(static_cast<size_t>(lay.size()), 0.0);
            for (Index i = 0; i < k; ++i)
                col[lay.rows_flow(i)] = -data.geom.lumped_areas[i] * mu[i];
            rows.push_back(std::move(row));
            cols.push_back(std::move(col));
            tails.push_back(-res_energy);
        }
        if (with_volume) {
            double volume_it = enclosed_volume(it_mesh);
            double res_volume = coeffs.alpha * volume_it - weighted_volume;

            std::vector<double> row(static_cast<size_t>(lay.size()), 0.0);
            VectorField dv = volume_gradient(it_mesh, it_geom);
            for (Index i = 0; i < k; ++i)
                for (int c = 0; c < 3; ++c)
                    row[lay.chi(i, c)] = coeffs.alpha * dv[i][c];
            rows.push_back(std::move(row));
            if (with_energy) {
                std::vector<double> col(static_cast<size_t>(lay.size()), 0.0);
                for (Index i = 0; i < k; ++i)
                    col[lay.rows_flow(i)] = -data.geom.lumped_areas[i];
                cols.push_back(std::move(col));
            }
            tails.push_back(-res_volume);
        }

        for (double& v : residual) v = -v;
        BorderedSolution delta;
        if (fixed_solver) {
            delta = fixed_solver->solve(rows, Eigen::Matrix2d::Zero(),
                                        residual, tails);
        } else {
            BorderedSystem system;
            system.core = cache_->matrix;
            system.border_cols = std::move(cols);
            system.border_rows = std::move(rows);
            system.rhs = std::move(residual);
            system.rhs_tail = std::move(tails);
            delta = solve_bordered(system);
        }

        if (!all_finite(delta.x))
            throw NewtonDiverged("multiplier iteration produced non-finite "
                                 "updates at sweep " +
                                 std::to_string(sweep + 1));
        auto step_fields = unflatten(delta.x);
        double update = max_abs(delta.x, 0, delta.x.size());
        int border = 0;
        double d_lambda = 0.0;
        double d_varrho = 0.0;
        if (with_energy) d_lambda = delta.multipliers[border++];
        if (with_volume) d_varrho = delta.multipliers[border++];
        update = std::max({update, std::abs(d_lambda), std::abs(d_varrho)});

        for (Index i = 0; i < k; ++i) {
            chi[i] += step_fields.positions[i];
            mu[i] += step_fields.mu[i];
            kappa[i] += step_fields.kappa[i];
        }
        lambda += d_lambda;
        varrho += d_varrho;
        report.newton_updates.push_back(update);
        if (update <= config_.newton_tol) {
            report.newton_iters = sweep + 1;
            report.final_residual = update;
            report.lambda = with_energy ? lambda : 0.0;
            report.varrho = with_volume ? varrho : 0.0;
            state_.lambda = report.lambda;
            state_.varrho = report.varrho;
            LinearSolution out;
            out.positions = std::move(chi);
            out.mu = std::move(mu);
            out.kappa = std::move(kappa);
            return out;
        }
    }
    throw NewtonDiverged(
        "multiplier iteration did not reach " +
        std::to_string(config_.newton_tol) + " within " +
        std::to_string(config_.max_newton_iters) + " sweeps (last update " +
        std::to_string(report.newton_updates.back()) + ")");
}

void Stepper::apply_sav_stage(LinearSolution& solution, StepReport& report,
                              double step) {
    SurfaceMesh stage_mesh = mesh_.with_vertices(solution.positions);
    SurfaceGeometry stage_geom = build_geometry(stage_mesh);
    double stage_energy = surface_energy(stage_mesh, density_);
    double shifted = stage_energy + config_.sav_shift;
    if (!(shifted > 0.0))
        throw NonpositiveEnergy("shifted stage energy is " +
                                std::to_string(shifted));

    KahanSum gradient_term;
    for (Index l = 0; l < stage_mesh.triangle_count(); ++l) {
        Vec3 g = discrete_gradient(solution.mu, stage_mesh, stage_geom, l);
        gradient_term.add(stage_geom.areas[l] * g.squaredNorm());
    }
    double previous_R = state_.R;
    SavUpdate update = sav_scalar_update(previous_R, shifted,
                                         gradient_term.value(), step,
                                         config_.sav_exponent);
    if (update.R < 0.0 || update.R > previous_R * (1.0 + 1e-12))
        throw Error("auxiliary energy update left its stable range");
    state_.R = update.R;

    report.stage_volume = enclosed_volume(stage_mesh);
    report.stage_energy = stage_energy;
    report.R = update.R;
    report.zeta = update.zeta;
    report.eta = update.eta;

    for (Index i = 0; i < cache_->layout.k; ++i) {
        solution.positions[i] *= update.eta;
        solution.mu[i] *= update.eta;
        solution.kappa[i] *= update.eta;
    }
}

void Stepper::adopt(const LinearSolution& solution, double step) {
    mesh_ = mesh_.with_vertices(solution.positions);
    state_.history.push_front(solution.positions);
    while (state_.history.size() > history_capacity_)
        state_.history.pop_back();
    state_.mu = solution.mu;
    state_.kappa = solution.kappa;
    state_.step_index += 1;
    state_.time += step;
}

StepReport Stepper::step_once(int order, double step) {
    StepReport report;
    const double t_target = state_.time + step;
    LinearSolution solution;
    switch (config_.scheme) {
        case SchemeKind::md: {
            VectorField predicted = predictor_for(order, step, t_target);
            solution = linear_md_solve(predicted, order, step, t_target);
            break;
        }
        case SchemeKind::vc_md: {
            solution = picard_vc_solve(step, &report.picard_iters);
            break;
        }
        case SchemeKind::sav_md: {
            VectorField predicted = predictor_for(order, step, t_target);
            solution = linear_md_solve(predicted, order, step, t_target);
            apply_sav_stage(solution, report, step);
            break;
        }
        case SchemeKind::vc_sav_md: {
            solution = picard_vc_solve(step, &report.picard_iters);
            apply_sav_stage(solution, report, step);
            break;
        }
        case SchemeKind::es_lm: {
            VectorField predicted = predictor_for(order, step, t_target);
            solution = newton_lm_solve(predicted, order, step, true, false,
                                       report);
            break;
        }
        case SchemeKind::vc_lm: {
            VectorField predicted = predictor_for(order, step, t_target);
            solution = newton_lm_solve(predicted, order, step, false, true,
                                       report);
            break;
        }
        case SchemeKind::sp_lm: {
            VectorField predicted = predictor_for(order, step, t_target);
            solution = newton_lm_solve(predicted, order, step, true, true,
                                       report);
            break;
        }
        case SchemeKind::lm_sav: {
            VectorField predicted = predictor_for(order, step, t_target);
            solution = newton_lm_solve(predicted, order, step, false, true,
                                       report);
            apply_sav_stage(solution, report, step);
            state_.varrho *= report.eta;
            report.varrho = state_.varrho;
            break;
        }
    }
    adopt(solution, step);
    return report;
}

StepReport Stepper::make_report(StepReport report) {
    report.step_index = state_.step_index;
    report.time = state_.time;
    report.volume = enclosed_volume(mesh_);
    report.rel_volume_loss =
        (report.volume - initial_volume_) / initial_volume_;
    report.energy = surface_energy(mesh_, density_);
    report.normalized_energy = report.energy / initial_energy_;
    report.mesh_quality = mesh_quality(mesh_);
    if (!config_.uses_sav()) {
        report.R = state_.R;
        report.zeta = 1.0;
        report.eta = 1.0;
    }
    return report;
}

StepReport Stepper::advance() {
    return make_report(step_once(config_.bdf_order, config_.dt));
}

}  // namespace mdflow
