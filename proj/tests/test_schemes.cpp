// Time-stepping schemes: coefficient tables, configuration rules, the
// auxiliary-scalar algebra, and the conservation / dissipation guarantees of
// each scheme family, checked on coarse meshes so the whole suite stays fast.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <deque>
#include <vector>

#include "mdflow/anisotropy.hpp"
#include "mdflow/errors.hpp"
#include "mdflow/fem.hpp"
#include "mdflow/mesh.hpp"
#include "mdflow/schemes.hpp"
#include "mdflow/shapes.hpp"

using namespace mdflow;

namespace {

double max_displacement(const VectorField& a, const VectorField& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        d = std::max(d, (a[i] - b[i]).lpNorm<Eigen::Infinity>());
    return d;
}

SchemeConfig base_config(SchemeKind kind, int order, double dt) {
    SchemeConfig cfg;
    cfg.scheme = kind;
    cfg.bdf_order = order;
    cfg.dt = dt;
    return cfg;
}

// Sphere relaxed under the isotropic flow until the discrete fixed point,
// shared by the equilibrium-sensitive cases below.
const SurfaceMesh& settled_icosphere() {
    static SurfaceMesh mesh = [] {
        Stepper st(generate_icosphere(2),
                   base_config(SchemeKind::md, 1, 5e-3),
                   AnisotropyDensity::isotropic());
        for (int s = 0; s < 250; ++s) st.advance();
        return st.mesh();
    }();
    return mesh;
}

SurfaceMesh coarse_ellipsoid() {
    return generate_ellipsoid(1.0, 1.0, 2.0, 0.35);
}

}  // namespace

TEST_CASE("backward-difference tables") {
    auto b1 = BdfCoefficients::of_order(1);
    CHECK(b1.alpha == 1.0);
    REQUIRE(b1.history_weights.size() == 1);
    CHECK(b1.history_weights[0] == 1.0);

    auto b2 = BdfCoefficients::of_order(2);
    CHECK(b2.alpha == 1.5);
    REQUIRE(b2.history_weights.size() == 2);
    CHECK(b2.history_weights[0] == 2.0);
    CHECK(b2.history_weights[1] == -0.5);

    auto b3 = BdfCoefficients::of_order(3);
    CHECK(b3.alpha == doctest::Approx(11.0 / 6.0).epsilon(1e-15));
    REQUIRE(b3.history_weights.size() == 3);
    CHECK(b3.history_weights[0] == 3.0);
    CHECK(b3.history_weights[1] == -1.5);
    CHECK(b3.history_weights[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    auto b4 = BdfCoefficients::of_order(4);
    CHECK(b4.alpha == doctest::Approx(25.0 / 12.0).epsilon(1e-15));
    REQUIRE(b4.history_weights.size() == 4);
    CHECK(b4.history_weights[0] == 4.0);
    CHECK(b4.history_weights[1] == -3.0);
    CHECK(b4.history_weights[2] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(b4.history_weights[3] == -0.25);

    // The property the volume-telescoping argument rests on: the new-value
    // weight equals the sum of the history weights.
    for (int k = 1; k <= 4; ++k) {
        auto b = BdfCoefficients::of_order(k);
        double sum = 0.0;
        for (double w : b.history_weights) sum += w;
        CHECK(b.alpha == doctest::Approx(sum).epsilon(1e-15));
    }

    CHECK_THROWS_AS(BdfCoefficients::of_order(0), Error);
    CHECK_THROWS_AS(BdfCoefficients::of_order(5), Error);
}

TEST_CASE("scheme names round-trip") {
    for (SchemeKind kind :
         {SchemeKind::md, SchemeKind::vc_md, SchemeKind::sav_md,
          SchemeKind::vc_sav_md, SchemeKind::es_lm, SchemeKind::vc_lm,
          SchemeKind::sp_lm, SchemeKind::lm_sav})
        CHECK(parse_scheme(scheme_name(kind)) == kind);
    CHECK(parse_scheme("vc-sav-md") == SchemeKind::vc_sav_md);
    CHECK_THROWS_AS(parse_scheme("bdf"), ParseError);
    CHECK_THROWS_AS(parse_scheme(""), ParseError);
}

TEST_CASE("configuration validation") {
    auto cfg = base_config(SchemeKind::md, 2, 1e-3);
    CHECK(cfg.validate().empty());
    CHECK_FALSE(cfg.uses_sav());
    CHECK_FALSE(cfg.uses_newton());

    cfg.bdf_order = 5;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.bdf_order = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.bdf_order = 2;
    cfg.dt = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.dt = 1e-3;
    cfg.stabilizer = -1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.stabilizer.reset();

    // Conserving variants run at order 1; higher requests warn and clamp.
    auto vc = base_config(SchemeKind::vc_md, 3, 1e-3);
    auto warnings = vc.validate();
    REQUIRE(warnings.size() == 1);
    CHECK(vc.bdf_order == 1);

    // Energy-multiplier variants warn above order 2 but keep the order.
    auto es = base_config(SchemeKind::es_lm, 3, 1e-3);
    CHECK(es.uses_newton());
    CHECK(es.validate().size() == 1);
    CHECK(es.bdf_order == 3);

    // The auxiliary exponent defaults to order+1 and may not sit below it.
    auto sav = base_config(SchemeKind::sav_md, 2, 1e-3);
    CHECK(sav.uses_sav());
    sav.validate();
    CHECK(sav.sav_exponent == 3);
    sav.sav_exponent = 2;
    CHECK_THROWS_AS(sav.validate(), Error);
    sav.sav_exponent = 5;
    CHECK(sav.validate().empty());
    sav.sav_shift = 0.5;
    CHECK(sav.validate().size() == 1);
    sav.sav_shift = 0.0;
    CHECK_THROWS_AS(sav.validate(), Error);

    auto lmsav = base_config(SchemeKind::lm_sav, 1, 1e-3);
    CHECK(lmsav.uses_sav());
    CHECK(lmsav.uses_newton());
}

TEST_CASE("auxiliary scalar update closed forms") {
    // Zero dissipation leaves the scalar alone.
    auto still = sav_scalar_update(3.0, 1.5, 0.0, 1e-2, 4);
    CHECK(still.R == 3.0);
    CHECK(still.zeta == doctest::Approx(2.0).epsilon(1e-15));

    // Hand-evaluated point: R' = 2*2/(2+1) = 4/3, zeta = 2/3,
    // eta = 1 - (1/3)^2 = 8/9.
    auto u = sav_scalar_update(2.0, 2.0, 1000.0, 1e-3, 2);
    CHECK(u.R == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(u.zeta == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(u.eta == doctest::Approx(8.0 / 9.0).epsilon(1e-15));

    // zeta = 1 pins eta = 1 for any exponent.
    auto unit = sav_scalar_update(5.0, 5.0, 0.0, 1e-2, 9);
    CHECK(unit.zeta == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(unit.eta == doctest::Approx(1.0).epsilon(1e-15));

    // Nonnegative dissipation can only shrink the scalar.
    for (double g : {0.0, 0.3, 10.0, 1e6}) {
        auto step = sav_scalar_update(1.7, 2.4, g, 5e-3, 3);
        CHECK(step.R <= 1.7 + 1e-15);
        CHECK(step.R >= 0.0);
        CHECK(step.zeta >= 0.0);
    }
}

TEST_CASE("discrete equilibrium is a fixed point of every order") {
    const SurfaceMesh& eq = settled_icosphere();
    auto iso = AnisotropyDensity::isotropic();

    // One more first-order step barely moves it.
    Stepper st1(eq, base_config(SchemeKind::md, 1, 1e-2), iso);
    st1.advance();
    CHECK(max_displacement(eq.vertices(), st1.mesh().vertices()) < 1e-8);

    // Higher orders seeded with the same snapshot stay put: the new-value
    // weight equals the summed history weights.
    for (int order : {2, 3}) {
        auto cfg = base_config(SchemeKind::md, order, 1e-2);
        cfg.bootstrap_substeps = 1;
        Stepper st(eq, cfg, iso);
        st.advance();
        CHECK(max_displacement(eq.vertices(), st.mesh().vertices()) < 1e-8);
    }

    // A vanishing step cannot displace an equilibrated surface, even under
    // a different density: the normal velocity scales with dt and the
    // tangential rows are already satisfied. (A raw mesh would still snap
    // to its harmonic reposition, which is a projection, not a velocity.)
    Stepper frozen(eq, base_config(SchemeKind::md, 1, 1e-12),
                   AnisotropyDensity::four_fold(0.05));
    frozen.advance();
    CHECK(max_displacement(eq.vertices(), frozen.mesh().vertices()) < 1e-8);
}

TEST_CASE("normal forcing grows the volume at the source rate") {
    // With a unit normal source on the equilibrated sphere the diffusion
    // term is negligible and one step changes the volume by about area*dt.
    const SurfaceMesh& eq = settled_icosphere();
    const double dt = 1e-3;
    Stepper st(eq, base_config(SchemeKind::md, 1, dt),
               AnisotropyDensity::isotropic(),
               [](const Vec3&, double) { return 1.0; });
    const double v0 = st.initial_volume();
    auto rep = st.advance();
    auto geom = build_geometry(eq);
    double area = 0.0;
    for (double a : geom.areas) area += a;
    CHECK(rep.volume - v0 == doctest::Approx(area * dt).epsilon(0.02));
}

TEST_CASE("time-weighted normal iteration conserves volume") {
    auto mesh = coarse_ellipsoid();
    Stepper st(mesh, base_config(SchemeKind::vc_md, 1, 1e-3),
               AnisotropyDensity::four_fold(0.05));
    double worst = 0.0;
    int min_sweeps = 1000;
    for (int s = 0; s < 100; ++s) {
        auto rep = st.advance();
        worst = std::max(worst, std::abs(rep.rel_volume_loss));
        min_sweeps = std::min(min_sweeps, rep.picard_iters);
    }
    CHECK(worst <= 1e-10);
    // The midpoint normal genuinely iterates; one sweep never suffices.
    CHECK(min_sweeps >= 2);
}

TEST_CASE("auxiliary-variable stage identities") {
    auto mesh = coarse_ellipsoid();
    auto cfg = base_config(SchemeKind::sav_md, 1, 1e-3);
    Stepper st(mesh, cfg, AnisotropyDensity::four_fold(0.05));
    CHECK(st.state().R ==
          doctest::Approx(st.initial_energy() + 1.0).epsilon(1e-14));

    double previous_R = st.state().R;
    for (int s = 0; s < 40; ++s) {
        auto rep = st.advance();
        CHECK(rep.R <= previous_R * (1.0 + 1e-13));
        CHECK(rep.zeta >= 0.0);
        // Rescaling by eta multiplies volume by eta^3 and energy by eta^2.
        double e3 = rep.eta * rep.eta * rep.eta;
        double e2 = rep.eta * rep.eta;
        CHECK(rep.volume ==
              doctest::Approx(e3 * rep.stage_volume).epsilon(1e-12));
        CHECK(rep.energy ==
              doctest::Approx(e2 * rep.stage_energy).epsilon(1e-12));
        previous_R = rep.R;
    }
}

TEST_CASE("stationary auxiliary stage leaves the state untouched") {
    // On the settled sphere the potential is uniform, the dissipation term
    // vanishes, and with R0 = W + C the rescale factor is exactly one.
    Stepper st(settled_icosphere(), base_config(SchemeKind::sav_md, 1, 1e-3),
               AnisotropyDensity::isotropic());
    auto rep = st.advance();
    CHECK(rep.R == doctest::Approx(st.initial_energy() + 1.0).epsilon(1e-10));
    CHECK(rep.zeta == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(rep.eta == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("rescale distance to one scales with the exponent") {
    // 1 - eta = (1 - zeta)^r with 1 - zeta of order dt, so halving the step
    // divides |1 - eta| by about 2^r. The fit compares the step starting at
    // a matched time well past the initial transient; early steps shed a
    // dt-independent burst of fast-mode energy that would mask the scaling.
    auto mesh = coarse_ellipsoid();
    auto density = AnisotropyDensity::four_fold(0.05);
    const int r = 2;
    const double tstar = 0.16;
    double gap[2];
    double dt = 5e-3;
    for (int i = 0; i < 2; ++i, dt /= 2) {
        auto cfg = base_config(SchemeKind::sav_md, 1, dt);
        cfg.sav_exponent = r;
        Stepper st(mesh, cfg, density);
        StepReport rep;
        int steps = static_cast<int>(std::lround(tstar / dt)) + 1;
        for (int s = 0; s < steps; ++s) rep = st.advance();
        gap[i] = std::abs(1.0 - rep.eta);
    }
    CHECK(gap[1] > 1e-13);
    double slope = std::log2(gap[0] / gap[1]);
    CHECK(slope == doctest::Approx(r).epsilon(0.25));
}

TEST_CASE("conserving auxiliary stage ties drift to the rescale") {
    auto mesh = coarse_ellipsoid();
    auto cfg = base_config(SchemeKind::vc_sav_md, 1, 1e-3);
    cfg.sav_exponent = 5;
    Stepper st(mesh, cfg, AnisotropyDensity::four_fold(0.05));
    double previous_volume = st.initial_volume();
    for (int s = 0; s < 30; ++s) {
        auto rep = st.advance();
        // Stage 1 hands over the conserved volume, stage 2 scales it.
        CHECK(rep.stage_volume ==
              doctest::Approx(previous_volume).epsilon(1e-10));
        double e3 = rep.eta * rep.eta * rep.eta;
        CHECK(rep.volume / rep.stage_volume ==
              doctest::Approx(e3).epsilon(1e-13));
        previous_volume = rep.volume;
    }
}

TEST_CASE("larger exponents push conserving drift toward roundoff") {
    auto mesh = coarse_ellipsoid();
    auto density = AnisotropyDensity::four_fold(0.5);
    double drift[2];
    int idx = 0;
    for (int r : {2, 5}) {
        auto cfg = base_config(SchemeKind::vc_sav_md, 1, 1e-2);
        cfg.sav_exponent = r;
        Stepper st(mesh, cfg, density);
        StepReport rep;
        for (int s = 0; s < 5; ++s) rep = st.advance();
        drift[idx++] = std::abs(rep.rel_volume_loss);
    }
    CHECK(drift[1] > 1e-14);
    CHECK(drift[0] / drift[1] >= 100.0);
}

TEST_CASE("volume multiplier conserves over long runs") {
    auto mesh = coarse_ellipsoid();
    Stepper st(mesh, base_config(SchemeKind::vc_lm, 1, 1e-3),
               AnisotropyDensity::four_fold(0.05));
    double worst = 0.0;
    for (int s = 0; s < 200; ++s) {
        auto rep = st.advance();
        worst = std::max(worst, std::abs(rep.rel_volume_loss));
        CHECK(rep.newton_iters <= 10);
        // Quadratic tail: each correction at least halves the previous one
        // until the iteration hits roundoff.
        const auto& u = rep.newton_updates;
        for (size_t j = 1; j < u.size(); ++j)
            if (u[j - 1] > 1e-8) CHECK(u[j] <= 0.5 * u[j - 1]);
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("higher-order volume multiplier telescopes the weighted volume") {
    auto mesh = coarse_ellipsoid();
    Stepper st(mesh, base_config(SchemeKind::vc_lm, 2, 1e-3),
               AnisotropyDensity::four_fold(0.05));
    const double v0 = st.initial_volume();
    // The bootstrap substeps conserve, and each order-2 step enforces the
    // weighted combination, so the plain volume stays pinned as well.
    double worst = 0.0;
    for (int s = 0; s < 60; ++s)
        worst = std::max(worst, std::abs(st.advance().rel_volume_loss));
    CHECK(worst * std::abs(v0) <= 1e-9 * std::abs(v0));
}

TEST_CASE("energy multiplier dissipates monotonically") {
    auto mesh = coarse_ellipsoid();
    Stepper st(mesh, base_config(SchemeKind::es_lm, 2, 1e-3),
               AnisotropyDensity::four_fold(0.05));
    double previous = st.initial_energy();
    for (int s = 0; s < 60; ++s) {
        auto rep = st.advance();
        CHECK(rep.energy <= previous * (1.0 + 1e-12));
        previous = rep.energy;
    }
}

TEST_CASE("dual multipliers conserve and dissipate away from equilibrium") {
    auto mesh = coarse_ellipsoid();
    Stepper st(mesh, base_config(SchemeKind::sp_lm, 1, 1e-3),
               AnisotropyDensity::four_fold(0.5));
    double previous = st.initial_energy();
    for (int s = 0; s < 20; ++s) {
        auto rep = st.advance();
        CHECK(std::abs(rep.rel_volume_loss) <= 1e-10);
        CHECK(rep.energy <= previous * (1.0 + 1e-12));
        previous = rep.energy;
    }
}

TEST_CASE("dual multipliers degenerate at equilibrium") {
    // A uniform chemical potential makes the two multiplier directions
    // collinear; the solver must refuse with the named diagnostic.
    Stepper st(settled_icosphere(), base_config(SchemeKind::sp_lm, 1, 1e-3),
               AnisotropyDensity::isotropic());
    auto run = [&] {
        for (int s = 0; s < 500; ++s) st.advance();
    };
    CHECK_THROWS_AS(run(), SingularSchurComplement);
}

TEST_CASE("multiplier auxiliary combination keeps both guarantees") {
    auto mesh = coarse_ellipsoid();
    auto cfg = base_config(SchemeKind::lm_sav, 1, 1e-3);
    cfg.sav_exponent = 5;
    Stepper st(mesh, cfg, AnisotropyDensity::four_fold(0.05));
    double previous_R = st.state().R;
    double previous_volume = st.initial_volume();
    for (int s = 0; s < 40; ++s) {
        auto rep = st.advance();
        CHECK(rep.R <= previous_R * (1.0 + 1e-13));
        CHECK(rep.stage_volume ==
              doctest::Approx(previous_volume).epsilon(1e-10));
        double e3 = rep.eta * rep.eta * rep.eta;
        CHECK(rep.volume / rep.stage_volume ==
              doctest::Approx(e3).epsilon(1e-13));
        previous_R = rep.R;
        previous_volume = rep.volume;
    }
}

TEST_CASE("multiplier auxiliary drift shrinks like the exponent") {
    // Same matched-time fit as above, applied to the per-step volume drift
    // |eta^3 - 1| of the conserving stage.
    auto mesh = coarse_ellipsoid();
    auto density = AnisotropyDensity::four_fold(0.05);
    const int r = 2;
    const double tstar = 0.16;
    double drift[2];
    double dt = 5e-3;
    for (int i = 0; i < 2; ++i, dt /= 2) {
        auto cfg = base_config(SchemeKind::lm_sav, 1, dt);
        cfg.sav_exponent = r;
        Stepper st(mesh, cfg, density);
        StepReport rep;
        int steps = static_cast<int>(std::lround(tstar / dt)) + 1;
        for (int s = 0; s < steps; ++s) rep = st.advance();
        drift[i] = std::abs(rep.volume / rep.stage_volume - 1.0);
    }
    CHECK(drift[1] > 1e-13);
    double slope = std::log2(drift[0] / drift[1]);
    CHECK(slope == doctest::Approx(r).epsilon(0.35));
}

TEST_CASE("bootstrap accounting") {
    auto iso = AnisotropyDensity::isotropic();
    auto tiny = generate_icosphere(0);

    Stepper first(tiny, base_config(SchemeKind::md, 1, 0.1), iso);
    CHECK(first.bootstrap_substeps_used() == 0);
    CHECK(first.state().history.size() == 1);
    CHECK(first.state().time == 0.0);

    // The derived substep size is dt^(k-1), so order 2 needs one substep
    // per history level and order 3 at dt = 0.1 needs ten.
    Stepper second(tiny, base_config(SchemeKind::md, 2, 0.1), iso);
    CHECK(second.bootstrap_substeps_used() == 1);
    CHECK(second.state().history.size() == 2);
    CHECK(second.state().time == doctest::Approx(0.1).epsilon(1e-15));

    Stepper third(tiny, base_config(SchemeKind::md, 3, 0.1), iso);
    CHECK(third.bootstrap_substeps_used() == 10);
    CHECK(third.state().history.size() == 3);
    CHECK(third.state().time == doctest::Approx(0.2).epsilon(1e-15));

    // Order 4 at a small step would demand dt^-2 substeps; the automatic
    // rule refuses and the explicit knob takes over.
    CHECK_THROWS_AS(
        Stepper(tiny, base_config(SchemeKind::md, 4, 1e-3), iso), Error);
    auto cfg = base_config(SchemeKind::md, 4, 1e-3);
    cfg.bootstrap_substeps = 2;
    Stepper fourth(tiny, cfg, iso);
    CHECK(fourth.bootstrap_substeps_used() == 2);
    CHECK(fourth.state().history.size() == 4);
    CHECK(fourth.state().time == doctest::Approx(3e-3).epsilon(1e-12));

    // Advancing continues the clock from the bootstrapped level.
    auto rep = third.advance();
    CHECK(rep.time == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("predictor matches the scheme definition") {
    const SurfaceMesh& eq = settled_icosphere();
    auto iso = AnisotropyDensity::isotropic();

    // First order predicts the current surface verbatim.
    Stepper st1(eq, base_config(SchemeKind::md, 1, 1e-3), iso);
    CHECK(max_displacement(st1.predictor_positions(), eq.vertices()) == 0.0);

    // At equilibrium the order-2 predictor stays within solver tolerance.
    auto cfg = base_config(SchemeKind::md, 2, 1e-2);
    cfg.bootstrap_substeps = 1;
    Stepper st2(eq, cfg, iso);
    CHECK(max_displacement(st2.predictor_positions(), eq.vertices()) < 1e-8);
}

TEST_CASE("stabilizer resolution") {
    auto fold = AnisotropyDensity::four_fold(0.5);
    auto tiny = generate_icosphere(1);

    Stepper automatic(tiny, base_config(SchemeKind::md, 1, 1e-3), fold);
    CHECK(automatic.stabilizer() ==
          doctest::Approx(default_stabilizer(fold)).epsilon(1e-12));

    auto cfg = base_config(SchemeKind::md, 1, 1e-3);
    cfg.stabilizer = 7.5;
    Stepper manual(tiny, cfg, fold);
    CHECK(manual.stabilizer() == 7.5);
}

TEST_CASE("advancing twice from one state is bitwise deterministic") {
    auto mesh = coarse_ellipsoid();
    auto density = AnisotropyDensity::three_fold(0.125);
    auto cfg = base_config(SchemeKind::sav_md, 2, 1e-3);
    Stepper a(mesh, cfg, density);
    Stepper b(mesh, cfg, density);
    for (int s = 0; s < 3; ++s) {
        a.advance();
        b.advance();
    }
    for (Index i = 0; i < mesh.vertex_count(); ++i)
        CHECK(a.mesh().vertices()[i] == b.mesh().vertices()[i]);
}
