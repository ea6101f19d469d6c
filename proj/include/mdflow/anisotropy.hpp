// Surface energy densities gamma(n), their degree-1 homogeneous extensions,
// the xi-vector (gradient of the extension), the stabilized symmetric matrix
// used by the weak form, and exact sphere quantities for manufactured
// solutions. All formulas are closed-form per density kind.
#pragma once

#include <array>
#include <string>

#include "mdflow/core.hpp"

namespace mdflow {

enum class DensityKind { isotropic, ellipsoidal, three_fold, four_fold };

// An orientation-dependent surface energy density. The fold kinds verify
// gamma > 0 over a dense sphere sample at construction instead of restricting
// beta a priori.
class AnisotropyDensity {
public:
    static AnisotropyDensity isotropic();
    static AnisotropyDensity ellipsoidal(double a1, double a2, double a3);
    static AnisotropyDensity three_fold(double beta);
    static AnisotropyDensity four_fold(double beta);

    // Grammar: "iso", "ellip:a1,a2,a3", "fold3:beta", "fold4:beta".
    static AnisotropyDensity parse(const std::string& spec);

    DensityKind kind() const { return kind_; }
    const std::array<double, 3>& semiaxes() const { return a_; }
    double beta() const { return beta_; }
    std::string spec_string() const;

    // gamma at a unit normal.
    double gamma(const Vec3& n) const;

    // Degree-1 homogeneous extension: |p| gamma(p/|p|), zero at p = 0.
    double extension(const Vec3& p) const;

    // Gradient of the extension at a unit normal (degree-0 homogeneous, so
    // this is the gradient at any positive multiple of n as well).
    Vec3 xi(const Vec3& n) const;

    // gamma(n) I - n xi^T - xi n^T + k n n^T, symmetrized.
    Mat3 stabilized_matrix(const Vec3& n, double k) const;

    // Surface divergence of xi on the unit sphere. Equals the full-space
    // Laplacian of the extension there because the radial second derivative
    // vanishes for a degree-1 homogeneous function.
    double sphere_div_xi(const Vec3& n) const;

    // Laplace-Beltrami (on the unit sphere) of sphere_div_xi.
    double sphere_laplacian_div_xi(const Vec3& n) const;

private:
    AnisotropyDensity(DensityKind kind, std::array<double, 3> a, double beta);

    DensityKind kind_;
    std::array<double, 3> a_{1.0, 1.0, 1.0};
    double beta_ = 0.0;
};

// Chemical potential of the flow on a sphere of radius r: div_S xi scales
// like 1/r along rays.
double exact_chemical_potential_on_sphere(const AnisotropyDensity& density,
                                          double r, const Vec3& n);

// i-th point of an n-point Fibonacci sphere covering (deterministic).
Vec3 fibonacci_sphere_point(int i, int n);

struct PsdReport {
    bool ok = false;
    double worst_eigenvalue = 0.0;
    Vec3 worst_n = Vec3::Zero();
};

// Smallest eigenvalue of the stabilized matrix over a Fibonacci sample of
// normals; ok when all eigenvalues are >= -1e-12.
PsdReport verify_positive_semidefinite(const AnisotropyDensity& density,
                                       double k, int samples);

// Smallest constant k (bisection to 1e-6) that passes the sampled
// semidefiniteness check. Throws NoStabilizerFound past k = 1e6.
double find_min_stabilizer(const AnisotropyDensity& density,
                           int samples = 4096);

// Twice the sampled maximum of gamma, floored at 1.1 times the minimal
// semidefiniteness value. Near k = 2 gamma the stabilized matrix is least
// sensitive to normal perturbations, which keeps schemes that assemble it on
// the lagged surface stable at practical step sizes.
double default_stabilizer(const AnisotropyDensity& density,
                          int samples = 4096);

}  // namespace mdflow
