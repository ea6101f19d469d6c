// P1 finite elements on a triangulated surface: cached per-element geometry
// (areas, normals, basis gradients), mass-lumped inner products, the sparse
// blocks of the discrete flow equations, and the deformation Jacobian
// between the current and reference configurations.
#pragma once

#include <optional>
#include <utility>

#include "mdflow/linalg.hpp"
#include "mdflow/mesh.hpp"

namespace mdflow {

// Everything element-local the assemblers need, built in one pass. Arrays
// indexed by element id (length L) or vertex id (length K).
struct SurfaceGeometry {
    std::vector<double> areas;                        // element areas
    VectorField normals;                              // unit element normals
    std::vector<std::array<Vec3, 3>> basis_gradients; // surface gradients of
                                                      // the three hat functions
    ScalarField lumped_areas;                         // 1/3 of incident area
    VectorField vertex_normals;                       // unit averaged normals
};

SurfaceGeometry build_geometry(const SurfaceMesh& mesh);

// Surface gradient of a nodal scalar field, constant per element.
Vec3 discrete_gradient(const ScalarField& field, const SurfaceMesh& mesh,
                       const SurfaceGeometry& geom, Index l);

// Row-wise gradient of a nodal vector field: (sum_i f_i g_i^T), a 3x3
// matrix with rows indexing the field component.
Mat3 discrete_gradient_matrix(const VectorField& field,
                              const SurfaceMesh& mesh,
                              const SurfaceGeometry& geom, Index l);

// Mass-lumped inner products. Nodal arguments are evaluated at vertices
// with the 1/3-area weights; element-constant data enters at face value.
double lumped_inner(const ScalarField& f, const ScalarField& g,
                    const SurfaceMesh& mesh, const SurfaceGeometry& geom);
double lumped_inner_element(const std::vector<double>& element_f,
                            const ScalarField& g, const SurfaceMesh& mesh,
                            const SurfaceGeometry& geom);
double lumped_inner_matrix(const std::vector<Mat3>& u,
                           const std::vector<Mat3>& v,
                           const SurfaceGeometry& geom);

// Area-weighted vertex average of an element vector field:
// sum over incident elements of (area/3) * value. Used for the effective
// (non-unit) vertex vectors of time-weighted normals.
VectorField vertex_lumped_vectors(const std::vector<Vec3>& element_field,
                                  const SurfaceMesh& mesh,
                                  const SurfaceGeometry& geom);

// Receives assembly contributions. When `structure` is set the (row, col)
// pattern is recorded too; value-only emission feeds a cached AssemblyPlan.
struct TripletSink {
    std::vector<std::pair<Index, Index>>* structure = nullptr;
    std::vector<double>* values = nullptr;
    Index row_offset = 0;
    Index col_offset = 0;

    void push(Index r, Index c, double v) const {
        if (structure) structure->emplace_back(r + row_offset, c + col_offset);
        values->push_back(v);
    }
};

// Laplace-Beltrami stiffness (K x K, symmetric positive semidefinite,
// constants in the kernel).
SparseMatrix assemble_laplacian(const SurfaceMesh& mesh,
                                const SurfaceGeometry& geom);
void emit_laplacian(const SurfaceMesh& mesh, const SurfaceGeometry& geom,
                    const TripletSink& sink);

// Lumped pairing (chi . v, phi): K x 3K, diagonal per vertex with entries
// lumped_area * v. The vertex vectors need not be unit length.
SparseMatrix assemble_weighted_normal_mass(const SurfaceMesh& mesh,
                                           const SurfaceGeometry& geom,
                                           const VectorField& vertex_vectors);
void emit_weighted_normal_mass(const SurfaceMesh& mesh,
                               const SurfaceGeometry& geom,
                               const VectorField& vertex_vectors,
                               const TripletSink& sink);

// Anisotropic curvature block (K x 3K), the matrix of the vertex-lumped
// pairing (Z grad chi, grad (v phi)). The product v phi is quadratic per
// element, so each corner of the quadrature sees v_i g_a^T plus the
// gradient of v itself at the test vertex.
SparseMatrix assemble_anisotropic_block(const SurfaceMesh& mesh,
                                        const SurfaceGeometry& geom,
                                        const std::vector<Mat3>& z_field,
                                        const VectorField& vertex_vectors);
void emit_anisotropic_block(const SurfaceMesh& mesh,
                            const SurfaceGeometry& geom,
                            const std::vector<Mat3>& z_field,
                            const VectorField& vertex_vectors,
                            const TripletSink& sink);

// Deformation data of one element relative to the reference configuration.
struct ElementJacobian {
    Mat3 j = Mat3::Identity();
    Mat3 inv = Mat3::Identity();
    double det = 1.0;
    double sqrt_det = 1.0;
};

ElementJacobian jacobian_matrix(const SurfaceMesh& mesh,
                                const SurfaceGeometry& geom, Index l);
std::vector<ElementJacobian> build_jacobians(const SurfaceMesh& mesh,
                                             const SurfaceGeometry& geom);

// Reference-pullback blocks: the chi stiffness weighted by J^{-1} sqrt(det J)
// (3K x 3K, component-diagonal) and the lumped kappa coupling weighted by
// v sqrt(det J) (3K x K).
std::pair<SparseMatrix, SparseMatrix> assemble_harmonic_block(
    const SurfaceMesh& mesh, const SurfaceGeometry& geom,
    const std::vector<ElementJacobian>& jacobians,
    const VectorField& vertex_vectors);
void emit_harmonic_stiffness(const SurfaceMesh& mesh,
                             const SurfaceGeometry& geom,
                             const std::vector<ElementJacobian>& jacobians,
                             const TripletSink& sink);
void emit_harmonic_coupling(const SurfaceMesh& mesh,
                            const SurfaceGeometry& geom,
                            const std::vector<ElementJacobian>& jacobians,
                            const VectorField& vertex_vectors,
                            const TripletSink& sink);

// Lumped sqrt(det J) vertex weights used by the kappa coupling:
// sum over incident elements of (area/3) sqrt(det J).
ScalarField lumped_jacobian_weights(const SurfaceMesh& mesh,
                                    const SurfaceGeometry& geom,
                                    const std::vector<ElementJacobian>& jacobians);

}  // namespace mdflow
