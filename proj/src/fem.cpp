#include "mdflow/fem.hpp"

#include <cmath>

#include "mdflow/errors.hpp"

namespace mdflow {

namespace {

void require_vertex_field(const SurfaceMesh& mesh, std::size_t n,
                          const char* what) {
    if (static_cast<Index>(n) != mesh.vertex_count())
        throw FieldMeshMismatch(std::string(what) +
                                " length does not match vertex count");
}

void require_element_field(const SurfaceMesh& mesh, std::size_t n,
                           const char* what) {
    if (static_cast<Index>(n) != mesh.triangle_count())
        throw FieldMeshMismatch(std::string(what) +
                                " length does not match element count");
}

}  // namespace

SurfaceGeometry build_geometry(const SurfaceMesh& mesh) {
    const auto& tris = mesh.triangles();
    const auto& v = mesh.vertices();
    const Index nl = mesh.triangle_count();
    const Index nk = mesh.vertex_count();

    SurfaceGeometry geom;
    geom.areas.resize(nl);
    geom.normals.resize(nl);
    geom.basis_gradients.resize(nl);
    VectorField crosses(nl);

#pragma omp parallel for schedule(static)
    for (Index l = 0; l < nl; ++l) {
        const Triangle& t = tris[l];
        crosses[l] = triangle_cross(v[t[0]], v[t[1]], v[t[2]]);
        geom.areas[l] = 0.5 * crosses[l].norm();
    }

    KahanSum area_sum;
    for (Index l = 0; l < nl; ++l) area_sum.add(geom.areas[l]);
    const double degenerate_below = 1e-14 * area_sum.value() / nl;
    for (Index l = 0; l < nl; ++l)
        if (geom.areas[l] < degenerate_below)
            throw DegenerateTriangle("element " + std::to_string(l) +
                                     " degenerate (area " +
                                     std::to_string(geom.areas[l]) + ")");

#pragma omp parallel for schedule(static)
    for (Index l = 0; l < nl; ++l) {
        const Triangle& t = tris[l];
        const double len = crosses[l].norm();
        const Vec3 n = crosses[l] / len;
        geom.normals[l] = n;
        for (int i = 0; i < 3; ++i)
            geom.basis_gradients[l][i] =
                (v[t[(i + 1) % 3]] - v[t[(i + 2) % 3]]).cross(n) / len;
    }

    geom.lumped_areas.assign(nk, 0.0);
    geom.vertex_normals.assign(nk, Vec3::Zero());
    Index bad_vertex = -1;
#pragma omp parallel for schedule(static)
    for (Index k = 0; k < nk; ++k) {
        double w = 0.0;
        Vec3 sum = Vec3::Zero();
        for (Index l : mesh.vertex_stars()[k]) {
            w += geom.areas[l] / 3.0;
            sum += 0.5 * crosses[l];  // area-weighted element normal
        }
        geom.lumped_areas[k] = w;
        double len = sum.norm();
        if (len < 1e-12) {
#pragma omp critical
            bad_vertex = (bad_vertex < 0) ? k : std::min(bad_vertex, k);
        } else {
            geom.vertex_normals[k] = sum / len;
        }
    }
    if (bad_vertex >= 0)
        throw ZeroAveragedNormal("vertex " + std::to_string(bad_vertex) +
                                 " has fold-back incident faces");
    return geom;
}

Vec3 discrete_gradient(const ScalarField& field, const SurfaceMesh& mesh,
                       const SurfaceGeometry& geom, Index l) {
    require_vertex_field(mesh, field.size(), "scalar field");
    const Triangle& t = mesh.triangles()[l];
    Vec3 g = Vec3::Zero();
    for (int i = 0; i < 3; ++i)
        g += field[t[i]] * geom.basis_gradients[l][i];
    return g;
}

Mat3 discrete_gradient_matrix(const VectorField& field,
                              const SurfaceMesh& mesh,
                              const SurfaceGeometry& geom, Index l) {
    require_vertex_field(mesh, field.size(), "vector field");
    const Triangle& t = mesh.triangles()[l];
    Mat3 g = Mat3::Zero();
    for (int i = 0; i < 3; ++i)
        g += field[t[i]] * geom.basis_gradients[l][i].transpose();
    return g;
}

double lumped_inner(const ScalarField& f, const ScalarField& g,
                    const SurfaceMesh& mesh, const SurfaceGeometry& geom) {
    require_vertex_field(mesh, f.size(), "first field");
    require_vertex_field(mesh, g.size(), "second field");
    KahanSum sum;
    for (Index k = 0; k < mesh.vertex_count(); ++k)
        sum.add(geom.lumped_areas[k] * f[k] * g[k]);
    return sum.value();
}

double lumped_inner_element(const std::vector<double>& element_f,
                            const ScalarField& g, const SurfaceMesh& mesh,
                            const SurfaceGeometry& geom) {
    require_element_field(mesh, element_f.size(), "element field");
    require_vertex_field(mesh, g.size(), "nodal field");
    KahanSum sum;
    for (Index l = 0; l < mesh.triangle_count(); ++l) {
        const Triangle& t = mesh.triangles()[l];
        sum.add(geom.areas[l] / 3.0 * element_f[l] *
                (g[t[0]] + g[t[1]] + g[t[2]]));
    }
    return sum.value();
}

double lumped_inner_matrix(const std::vector<Mat3>& u,
                           const std::vector<Mat3>& v,
                           const SurfaceGeometry& geom) {
    if (u.size() != geom.areas.size() || v.size() != geom.areas.size())
        throw FieldMeshMismatch("matrix field length does not match elements");
    KahanSum sum;
    for (std::size_t l = 0; l < u.size(); ++l)
        sum.add(geom.areas[l] * u[l].cwiseProduct(v[l]).sum());
    return sum.value();
}

VectorField vertex_lumped_vectors(const std::vector<Vec3>& element_field,
                                  const SurfaceMesh& mesh,
                                  const SurfaceGeometry& geom) {
    require_element_field(mesh, element_field.size(), "element field");
    VectorField out(mesh.vertex_count(), Vec3::Zero());
#pragma omp parallel for schedule(static)
    for (Index k = 0; k < mesh.vertex_count(); ++k)
        for (Index l : mesh.vertex_stars()[k])
            out[k] += geom.areas[l] / 3.0 * element_field[l];
    return out;
}

void emit_laplacian(const SurfaceMesh& mesh, const SurfaceGeometry& geom,
                    const TripletSink& sink) {
    for (Index l = 0; l < mesh.triangle_count(); ++l) {
        const Triangle& t = mesh.triangles()[l];
        const auto& g = geom.basis_gradients[l];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                sink.push(t[i], t[j], geom.areas[l] * g[i].dot(g[j]));
    }
}

SparseMatrix assemble_laplacian(const SurfaceMesh& mesh,
                                const SurfaceGeometry& geom) {
    std::vector<std::pair<Index, Index>> entries;
    std::vector<double> values;
    emit_laplacian(mesh, geom, {&entries, &values, 0, 0});
    const Index k = mesh.vertex_count();
    return AssemblyPlan(k, k, entries).assemble(values);
}

void emit_weighted_normal_mass(const SurfaceMesh& mesh,
                               const SurfaceGeometry& geom,
                               const VectorField& vertex_vectors,
                               const TripletSink& sink) {
    require_vertex_field(mesh, vertex_vectors.size(), "vertex vectors");
    const Index nk = mesh.vertex_count();
    for (Index k = 0; k < nk; ++k)
        for (Index c = 0; c < 3; ++c)
            sink.push(k, c * nk + k,
                      geom.lumped_areas[k] * vertex_vectors[k][c]);
}

SparseMatrix assemble_weighted_normal_mass(const SurfaceMesh& mesh,
                                           const SurfaceGeometry& geom,
                                           const VectorField& vertex_vectors) {
    std::vector<std::pair<Index, Index>> entries;
    std::vector<double> values;
    emit_weighted_normal_mass(mesh, geom, vertex_vectors,
                              {&entries, &values, 0, 0});
    const Index k = mesh.vertex_count();
    return AssemblyPlan(k, 3 * k, entries).assemble(values);
}

void emit_anisotropic_block(const SurfaceMesh& mesh,
                            const SurfaceGeometry& geom,
                            const std::vector<Mat3>& z_field,
                            const VectorField& vertex_vectors,
                            const TripletSink& sink) {
    require_element_field(mesh, z_field.size(), "element matrix field");
    require_vertex_field(mesh, vertex_vectors.size(), "vertex vectors");
    const Index nk = mesh.vertex_count();
    for (Index l = 0; l < mesh.triangle_count(); ++l) {
        const Triangle& t = mesh.triangles()[l];
        const auto& g = geom.basis_gradients[l];
        // The test field (v phi_a) is quadratic on the element, so the lumped
        // rule sees its exact gradient at each corner: v_i g_a^T plus, at the
        // test vertex itself, the gradient of the interpolated v field. The
        // corner sum turns these into a mean-v coupling through g_a . g_b and
        // a row-independent share of (Z grad chi) : grad v.
        Vec3 zv[3];
        for (int i = 0; i < 3; ++i)
            zv[i] = z_field[l] * vertex_vectors[t[i]];
        const Vec3 zv_mean = (zv[0] + zv[1] + zv[2]) / 3.0;
        for (int j = 0; j < 3; ++j) {
            Vec3 grad_share = Vec3::Zero();
            for (int i = 0; i < 3; ++i)
                grad_share += (g[i].dot(g[j]) / 3.0) * zv[i];
            for (int i = 0; i < 3; ++i) {
                const Vec3 coeff =
                    geom.areas[l] * (grad_share + g[i].dot(g[j]) * zv_mean);
                for (Index c = 0; c < 3; ++c)
                    sink.push(t[i], c * nk + t[j], coeff[c]);
            }
        }
    }
}

SparseMatrix assemble_anisotropic_block(const SurfaceMesh& mesh,
                                        const SurfaceGeometry& geom,
                                        const std::vector<Mat3>& z_field,
                                        const VectorField& vertex_vectors) {
    std::vector<std::pair<Index, Index>> entries;
    std::vector<double> values;
    emit_anisotropic_block(mesh, geom, z_field, vertex_vectors,
                           {&entries, &values, 0, 0});
    const Index k = mesh.vertex_count();
    return AssemblyPlan(k, 3 * k, entries).assemble(values);
}

ElementJacobian jacobian_matrix(const SurfaceMesh& mesh,
                                const SurfaceGeometry& geom, Index l) {
    const Triangle& t = mesh.triangles()[l];
    const auto& ref = mesh.reference_vertices();
    Mat3 grad_ref = Mat3::Zero();
    for (int i = 0; i < 3; ++i)
        grad_ref += ref[t[i]] * geom.basis_gradients[l][i].transpose();
    ElementJacobian out;
    out.j = grad_ref * grad_ref.transpose() +
            geom.normals[l] * geom.normals[l].transpose();
    out.det = out.j.determinant();
    if (out.det <= 1e-14)
        throw SingularJacobian("element " + std::to_string(l) +
                               " collapsed relative to reference (det J = " +
                               std::to_string(out.det) + ")");
    out.inv = out.j.inverse();
    out.sqrt_det = std::sqrt(out.det);
    return out;
}

std::vector<ElementJacobian> build_jacobians(const SurfaceMesh& mesh,
                                             const SurfaceGeometry& geom) {
    const Index nl = mesh.triangle_count();
    std::vector<ElementJacobian> out(nl);
    const auto& ref = mesh.reference_vertices();
    Index bad = -1;
#pragma omp parallel for schedule(static)
    for (Index l = 0; l < nl; ++l) {
        const Triangle& t = mesh.triangles()[l];
        Mat3 grad_ref = Mat3::Zero();
        for (int i = 0; i < 3; ++i)
            grad_ref += ref[t[i]] * geom.basis_gradients[l][i].transpose();
        ElementJacobian& e = out[l];
        e.j = grad_ref * grad_ref.transpose() +
              geom.normals[l] * geom.normals[l].transpose();
        e.det = e.j.determinant();
        if (e.det <= 1e-14) {
#pragma omp critical
            bad = (bad < 0) ? l : std::min(bad, l);
        } else {
            e.inv = e.j.inverse();
            e.sqrt_det = std::sqrt(e.det);
        }
    }
    if (bad >= 0)
        throw SingularJacobian("element " + std::to_string(bad) +
                               " collapsed relative to reference");
    return out;
}

ScalarField lumped_jacobian_weights(
    const SurfaceMesh& mesh, const SurfaceGeometry& geom,
    const std::vector<ElementJacobian>& jacobians) {
    require_element_field(mesh, jacobians.size(), "jacobian field");
    ScalarField out(mesh.vertex_count(), 0.0);
#pragma omp parallel for schedule(static)
    for (Index k = 0; k < mesh.vertex_count(); ++k)
        for (Index l : mesh.vertex_stars()[k])
            out[k] += geom.areas[l] / 3.0 * jacobians[l].sqrt_det;
    return out;
}

void emit_harmonic_stiffness(const SurfaceMesh& mesh,
                             const SurfaceGeometry& geom,
                             const std::vector<ElementJacobian>& jacobians,
                             const TripletSink& sink) {
    require_element_field(mesh, jacobians.size(), "jacobian field");
    const Index nk = mesh.vertex_count();
    for (Index l = 0; l < mesh.triangle_count(); ++l) {
        const Triangle& t = mesh.triangles()[l];
        const auto& g = geom.basis_gradients[l];
        const double w = geom.areas[l] * jacobians[l].sqrt_det;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double s = w * g[j].dot(jacobians[l].inv * g[i]);
                for (Index r = 0; r < 3; ++r)
                    sink.push(r * nk + t[i], r * nk + t[j], s);
            }
    }
}

void emit_harmonic_coupling(const SurfaceMesh& mesh,
                            const SurfaceGeometry& geom,
                            const std::vector<ElementJacobian>& jacobians,
                            const VectorField& vertex_vectors,
                            const TripletSink& sink) {
    require_vertex_field(mesh, vertex_vectors.size(), "vertex vectors");
    const Index nk = mesh.vertex_count();
    const ScalarField weights = lumped_jacobian_weights(mesh, geom, jacobians);
    for (Index k = 0; k < nk; ++k)
        for (Index r = 0; r < 3; ++r)
            sink.push(r * nk + k, k, weights[k] * vertex_vectors[k][r]);
}

std::pair<SparseMatrix, SparseMatrix> assemble_harmonic_block(
    const SurfaceMesh& mesh, const SurfaceGeometry& geom,
    const std::vector<ElementJacobian>& jacobians,
    const VectorField& vertex_vectors) {
    const Index k = mesh.vertex_count();
    std::vector<std::pair<Index, Index>> entries;
    std::vector<double> values;
    emit_harmonic_stiffness(mesh, geom, jacobians, {&entries, &values, 0, 0});
    SparseMatrix stiffness = AssemblyPlan(3 * k, 3 * k, entries).assemble(values);
    entries.clear();
    values.clear();
    emit_harmonic_coupling(mesh, geom, jacobians, vertex_vectors,
                           {&entries, &values, 0, 0});
    SparseMatrix coupling = AssemblyPlan(3 * k, k, entries).assemble(values);
    return {std::move(stiffness), std::move(coupling)};
}

}  // namespace mdflow
