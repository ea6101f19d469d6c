#include "mdflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "mdflow/errors.hpp"

namespace mdflow {

namespace {

// Directed edge key for manifold checks; vertex ids fit easily in 32 bits.
std::uint64_t edge_key(Index a, Index b) {
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

void validate(const VectorField& vertices,
              const std::vector<Triangle>& triangles) {
    const Index nv = static_cast<Index>(vertices.size());
    const Index nt = static_cast<Index>(triangles.size());
    if (nt < 4) throw OpenSurface("too few triangles for a closed surface");

    double total_area = 0.0;
    for (Index l = 0; l < nt; ++l) {
        const Triangle& t = triangles[l];
        for (int i = 0; i < 3; ++i) {
            if (t[i] < 0 || t[i] >= nv)
                throw ParseError("triangle " + std::to_string(l) +
                                 " references vertex " + std::to_string(t[i]) +
                                 " out of range");
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw DegenerateTriangle("triangle " + std::to_string(l) +
                                     " repeats a vertex");
        total_area += 0.5 * triangle_cross(vertices[t[0]], vertices[t[1]],
                                           vertices[t[2]]).norm();
    }
    const double mean_area = total_area / nt;
    for (Index l = 0; l < nt; ++l) {
        const Triangle& t = triangles[l];
        double area = 0.5 * triangle_cross(vertices[t[0]], vertices[t[1]],
                                           vertices[t[2]]).norm();
        if (area < 1e-14 * mean_area)
            throw DegenerateTriangle("triangle " + std::to_string(l) +
                                     " has near-zero area " +
                                     std::to_string(area));
    }

    std::unordered_map<std::uint64_t, Index> directed;
    directed.reserve(3 * triangles.size());
    for (Index l = 0; l < nt; ++l) {
        const Triangle& t = triangles[l];
        for (int i = 0; i < 3; ++i) {
            Index a = t[i], b = t[(i + 1) % 3];
            auto [it, inserted] = directed.emplace(edge_key(a, b), l);
            if (!inserted)
                throw InconsistentOrientation(
                    "edge (" + std::to_string(a) + "," + std::to_string(b) +
                    ") traversed twice in the same direction by triangles " +
                    std::to_string(it->second) + " and " + std::to_string(l));
        }
    }
    for (const auto& [key, l] : directed) {
        Index a = static_cast<Index>(key >> 32);
        Index b = static_cast<Index>(key & 0xffffffffu);
        if (directed.find(edge_key(b, a)) == directed.end())
            throw OpenSurface("edge (" + std::to_string(a) + "," +
                              std::to_string(b) + ") of triangle " +
                              std::to_string(l) + " has no partner");
    }
}

}  // namespace

SurfaceMesh SurfaceMesh::create(VectorField vertices,
                                std::vector<Triangle> triangles) {
    validate(vertices, triangles);
    auto topo = std::make_shared<Topology>();
    topo->stars.resize(vertices.size());
    for (Index l = 0; l < static_cast<Index>(triangles.size()); ++l)
        for (Index k : triangles[l]) topo->stars[k].push_back(l);
    for (auto& star : topo->stars)
        if (star.empty()) throw OpenSurface("isolated vertex");
    topo->triangles = std::move(triangles);

    SurfaceMesh mesh;
    mesh.topo_ = std::move(topo);
    mesh.reference_ = std::make_shared<VectorField>(vertices);
    mesh.verts_ = std::move(vertices);
    return mesh;
}

SurfaceMesh SurfaceMesh::with_vertices(VectorField vertices) const {
    if (vertices.size() != verts_.size())
        throw FieldMeshMismatch("position count " +
                                std::to_string(vertices.size()) +
                                " != vertex count " +
                                std::to_string(verts_.size()));
    SurfaceMesh mesh;
    mesh.topo_ = topo_;
    mesh.reference_ = reference_;
    mesh.verts_ = std::move(vertices);
    return mesh;
}

Index SurfaceMesh::triangle_count() const {
    return static_cast<Index>(topo_->triangles.size());
}

const std::vector<Triangle>& SurfaceMesh::triangles() const {
    return topo_->triangles;
}

const std::vector<std::vector<Index>>& SurfaceMesh::vertex_stars() const {
    return topo_->stars;
}

Vec3 triangle_cross(const Vec3& q1, const Vec3& q2, const Vec3& q3) {
    return (q2 - q1).cross(q3 - q1);
}

double mean_element_area(const SurfaceMesh& mesh) {
    const auto& tris = mesh.triangles();
    const auto& v = mesh.vertices();
    KahanSum sum;
    for (const Triangle& t : tris)
        sum.add(0.5 * triangle_cross(v[t[0]], v[t[1]], v[t[2]]).norm());
    return sum.value() / mesh.triangle_count();
}

Vec3 element_normal(const SurfaceMesh& mesh, Index l) {
    const Triangle& t = mesh.triangles()[l];
    const auto& v = mesh.vertices();
    Vec3 c = triangle_cross(v[t[0]], v[t[1]], v[t[2]]);
    double len = c.norm();
    if (0.5 * len < 1e-14 * mean_element_area(mesh))
        throw DegenerateTriangle("element " + std::to_string(l) +
                                 " degenerate (area " +
                                 std::to_string(0.5 * len) + ")");
    return c / len;
}

double element_area(const SurfaceMesh& mesh, Index l) {
    const Triangle& t = mesh.triangles()[l];
    const auto& v = mesh.vertices();
    return 0.5 * triangle_cross(v[t[0]], v[t[1]], v[t[2]]).norm();
}

Vec3 averaged_vertex_normal(const SurfaceMesh& mesh, Index k) {
    const auto& v = mesh.vertices();
    Vec3 sum = Vec3::Zero();
    for (Index l : mesh.vertex_stars()[k]) {
        const Triangle& t = mesh.triangles()[l];
        // area * normal = cross/2, so the area weighting needs no division.
        sum += 0.5 * triangle_cross(v[t[0]], v[t[1]], v[t[2]]);
    }
    double len = sum.norm();
    if (len < 1e-12)
        throw ZeroAveragedNormal("vertex " + std::to_string(k) +
                                 " has fold-back incident faces");
    return sum / len;
}

namespace {

// Shared element-buffer pattern: fill per-element contributions (possibly in
// parallel; each slot written once) then reduce in index order so the result
// matches the serial reference bit for bit.
template <typename Fn>
double element_reduction(Index count, Fn&& per_element) {
    std::vector<double> buf(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(static)
    for (Index l = 0; l < count; ++l) buf[l] = per_element(l);
    return ordered_sum(buf);
}

double volume_term(const SurfaceMesh& mesh, Index l) {
    const Triangle& t = mesh.triangles()[l];
    const auto& v = mesh.vertices();
    Vec3 c = triangle_cross(v[t[0]], v[t[1]], v[t[2]]);
    return c.dot(v[t[0]] + v[t[1]] + v[t[2]]) / 18.0;
}

double energy_term(const SurfaceMesh& mesh, const AnisotropyDensity& density,
                   Index l) {
    const Triangle& t = mesh.triangles()[l];
    const auto& v = mesh.vertices();
    Vec3 c = triangle_cross(v[t[0]], v[t[1]], v[t[2]]);
    double len = c.norm();
    if (len == 0.0) return 0.0;
    return 0.5 * len * density.gamma(c / len);
}

}  // namespace

double enclosed_volume(const SurfaceMesh& mesh) {
    return element_reduction(mesh.triangle_count(),
                             [&](Index l) { return volume_term(mesh, l); });
}

double enclosed_volume_serial(const SurfaceMesh& mesh) {
    KahanSum sum;
    for (Index l = 0; l < mesh.triangle_count(); ++l)
        sum.add(volume_term(mesh, l));
    return sum.value();
}

double surface_energy(const SurfaceMesh& mesh,
                      const AnisotropyDensity& density) {
    return element_reduction(mesh.triangle_count(), [&](Index l) {
        return energy_term(mesh, density, l);
    });
}

double surface_energy_serial(const SurfaceMesh& mesh,
                             const AnisotropyDensity& density) {
    KahanSum sum;
    for (Index l = 0; l < mesh.triangle_count(); ++l)
        sum.add(energy_term(mesh, density, l));
    return sum.value();
}

Vec3 time_weighted_normal(const SurfaceMesh& mesh_old,
                          const VectorField& midpoint_positions,
                          const VectorField& new_positions, Index l) {
    if (midpoint_positions.size() != mesh_old.vertices().size() ||
        new_positions.size() != mesh_old.vertices().size())
        throw FieldMeshMismatch("position sets differ in length");
    const Triangle& t = mesh_old.triangles()[l];
    const auto& vo = mesh_old.vertices();
    Vec3 c_old = triangle_cross(vo[t[0]], vo[t[1]], vo[t[2]]);
    double len = c_old.norm();
    if (len == 0.0)
        throw DegenerateTriangle("element " + std::to_string(l) +
                                 " degenerate at old positions");
    Vec3 c_mid = triangle_cross(midpoint_positions[t[0]],
                                midpoint_positions[t[1]],
                                midpoint_positions[t[2]]);
    Vec3 c_new = triangle_cross(new_positions[t[0]], new_positions[t[1]],
                                new_positions[t[2]]);
    return (c_old + 4.0 * c_mid + c_new) / (6.0 * len);
}

MeshQualityReport mesh_quality(const SurfaceMesh& mesh) {
    const auto& v = mesh.vertices();
    MeshQualityReport report;
    report.min_angle = std::numeric_limits<double>::infinity();
    double min_area = std::numeric_limits<double>::infinity();
    double max_area = 0.0;
    double min_edge = std::numeric_limits<double>::infinity();
    double max_edge = 0.0;
    KahanSum area_sum;
    for (const Triangle& t : mesh.triangles())
        area_sum.add(0.5 * triangle_cross(v[t[0]], v[t[1]], v[t[2]]).norm());
    const double degenerate_below =
        1e-14 * area_sum.value() / mesh.triangle_count();

    for (const Triangle& t : mesh.triangles()) {
        double area = 0.5 * triangle_cross(v[t[0]], v[t[1]], v[t[2]]).norm();
        if (area < degenerate_below) ++report.degenerate_count;
        min_area = std::min(min_area, area);
        max_area = std::max(max_area, area);
        for (int i = 0; i < 3; ++i) {
            Vec3 e1 = v[t[(i + 1) % 3]] - v[t[i]];
            Vec3 e2 = v[t[(i + 2) % 3]] - v[t[i]];
            double angle = std::atan2(e1.cross(e2).norm(), e1.dot(e2));
            report.min_angle = std::min(report.min_angle, angle);
            double edge = e1.norm();
            min_edge = std::min(min_edge, edge);
            max_edge = std::max(max_edge, edge);
        }
    }
    report.max_min_area_ratio = max_area / min_area;
    report.max_edge_ratio = max_edge / min_edge;
    return report;
}

}  // namespace mdflow
