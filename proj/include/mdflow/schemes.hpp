// Time-stepping schemes for the anisotropic surface diffusion flow with the
// minimal-deformation tangential velocity: the plain BDFk scheme, the
// volume-conserving BDF1 variant, the scalar-auxiliary-variable family, the
// Lagrange-multiplier family solved by Newton iteration, and the combined
// multiplier/auxiliary-variable scheme.
#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mdflow/anisotropy.hpp"
#include "mdflow/fem.hpp"
#include "mdflow/mesh.hpp"

namespace mdflow {

// Backward-differentiation coefficients: the new-value weight alpha and the
// extrapolation weights applied to the k history snapshots, newest first.
// Alpha always equals the sum of the history weights, which is what makes
// constant states fixed points and volume telescoping possible.
struct BdfCoefficients {
    int order = 1;
    double alpha = 1.0;
    std::vector<double> history_weights;

    static BdfCoefficients of_order(int k);
};

enum class SchemeKind {
    md,         // plain BDFk
    vc_md,      // volume-conserving BDF1 (time-weighted normals, Picard)
    sav_md,     // BDFk with auxiliary-energy rescaling
    vc_sav_md,  // volume-conserving stage + auxiliary-energy rescaling
    es_lm,      // energy multiplier (Newton)
    vc_lm,      // volume multiplier (Newton)
    sp_lm,      // both multipliers (Newton)
    lm_sav,     // volume multiplier stage + auxiliary-energy rescaling
};

const char* scheme_name(SchemeKind kind);
SchemeKind parse_scheme(const std::string& name);  // hyphenated names

struct SchemeConfig {
    SchemeKind scheme = SchemeKind::md;
    int bdf_order = 1;
    double dt = 1e-3;
    int sav_exponent = 0;          // r; 0 selects bdf_order + 1
    double sav_shift = 1.0;        // additive constant of the shifted energy
    double newton_tol = 1e-10;
    int max_newton_iters = 50;
    double picard_tol = 1e-12;
    int max_picard_iters = 100;
    std::optional<double> stabilizer;  // empty selects the default for the density
    int bootstrap_substeps = 0;        // 0 derives the count from dt^(order-1)

    bool uses_sav() const;
    bool uses_newton() const;

    // Normalizes derived fields and enforces the scheme constraints: the
    // volume-conserving variants run at order 1, the auxiliary-variable
    // exponent must be at least order+1, orders outside 1..4 are rejected.
    // Returns human-readable warnings for soft violations.
    std::vector<std::string> validate();
};

struct FlowState {
    std::deque<VectorField> history;  // newest first, length = bdf order
    double R = 0.0;                   // auxiliary energy scalar
    double lambda = 0.0;
    double varrho = 0.0;
    long step_index = 0;
    double time = 0.0;
    ScalarField mu;     // last chemical potential (warm start, reporting)
    ScalarField kappa;  // last mean-curvature-like field
};

struct StepReport {
    long step_index = 0;
    double time = 0.0;
    double volume = 0.0;
    double rel_volume_loss = 0.0;  // (V - V0) / V0
    double energy = 0.0;
    double normalized_energy = 1.0;  // W / W0
    double stage_volume = 0.0;       // before any auxiliary rescaling
    double stage_energy = 0.0;
    double R = 0.0;
    double zeta = 1.0;
    double eta = 1.0;
    double lambda = 0.0;
    double varrho = 0.0;
    int newton_iters = 0;
    int picard_iters = 0;
    double final_residual = 0.0;
    std::vector<double> newton_updates;  // max-norm of each Newton correction
    MeshQualityReport mesh_quality;
};

struct SavUpdate {
    double R = 0.0;
    double zeta = 0.0;
    double eta = 0.0;
};

// Closed-form auxiliary scalar update:
// R' = R W / (W + dt g), zeta = R'/W, eta = 1 - (1 - zeta)^r.
SavUpdate sav_scalar_update(double R_prev, double shifted_energy,
                            double gradient_term, double dt, int r);

// Gradient of the discrete surface energy with respect to the vertex
// positions, one vector per vertex.
VectorField energy_gradient(const SurfaceMesh& mesh,
                            const SurfaceGeometry& geom,
                            const AnisotropyDensity& density);

// Gradient of the enclosed volume with respect to the vertex positions:
// the area-weighted (non-unit) vertex normals.
VectorField volume_gradient(const SurfaceMesh& mesh,
                            const SurfaceGeometry& geom);

// Drives one surface through time with the configured scheme. Construction
// resolves the stabilizer, initializes the auxiliary scalar, and for orders
// above one builds the missing history by first-order substeps.
class Stepper {
public:
    // Scalar normal-velocity source, evaluated at a vertex position and the
    // target time of the step it enters.
    using Forcing = std::function<double(const Vec3&, double)>;

    Stepper(SurfaceMesh initial, SchemeConfig config,
            AnisotropyDensity density, Forcing forcing = {});
    ~Stepper();
    Stepper(Stepper&&) noexcept;

    StepReport advance();

    const FlowState& state() const { return state_; }
    const SurfaceMesh& mesh() const { return mesh_; }
    const SchemeConfig& config() const { return config_; }
    const AnisotropyDensity& density() const { return density_; }
    double stabilizer() const { return stabilizer_; }
    int bootstrap_substeps_used() const { return bootstrap_substeps_used_; }
    double initial_volume() const { return initial_volume_; }
    double initial_energy() const { return initial_energy_; }

    // Positions of the predicted surface the next step would assemble on.
    VectorField predictor_positions();

private:
    struct LinearSolution {
        VectorField positions;
        ScalarField mu;
        ScalarField kappa;
    };
    struct SurfaceData;  // cached per-assembly geometry

    void bootstrap();
    SurfaceData make_surface_data(const VectorField& positions) const;
    std::vector<double> flow_rhs(const SurfaceData& data,
                                 const VectorField& flow_vectors, int order,
                                 double step, double t_target) const;
    LinearSolution unflatten(const std::vector<double>& y) const;
    VectorField predictor_for(int order, double step, double t_target);
    LinearSolution linear_md_solve(const VectorField& predicted, int order,
                                   double step, double t_target);
    LinearSolution picard_vc_solve(double step, int* iters_out);
    LinearSolution newton_lm_solve(const VectorField& predicted, int order,
                                   double step, bool with_energy,
                                   bool with_volume, StepReport& report);
    void apply_sav_stage(LinearSolution& solution, StepReport& report,
                         double step);
    StepReport step_once(int order, double step);
    void adopt(const LinearSolution& solution, double step);
    StepReport make_report(StepReport report);
    void init_mu_kappa();

    SurfaceMesh mesh_;
    SchemeConfig config_;
    AnisotropyDensity density_;
    Forcing forcing_;
    FlowState state_;
    double stabilizer_ = 0.0;
    int bootstrap_substeps_used_ = 0;
    size_t history_capacity_ = 1;
    double initial_volume_ = 0.0;
    double initial_energy_ = 0.0;

    struct AssemblyCache;
    std::unique_ptr<AssemblyCache> cache_;
};

}  // namespace mdflow
