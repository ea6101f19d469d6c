// Closed triangulated surface: the mesh type with its validation, per-element
// geometry, area-weighted vertex normals, enclosed volume, surface energy,
// and quality metrics. Connectivity is fixed at construction; evolving
// surfaces are snapshots sharing one topology.
#pragma once

#include <array>
#include <memory>
#include <vector>

#include "mdflow/anisotropy.hpp"
#include "mdflow/core.hpp"

namespace mdflow {

using Triangle = std::array<Index, 3>;

class SurfaceMesh {
public:
    // Validates that the triangles form a closed orientable 2-manifold with
    // consistent outward orientation and no degenerate element, then stores
    // the given positions as both current and reference configuration.
    static SurfaceMesh create(VectorField vertices,
                              std::vector<Triangle> triangles);

    // Same connectivity and reference configuration, new positions.
    SurfaceMesh with_vertices(VectorField vertices) const;

    Index vertex_count() const { return static_cast<Index>(verts_.size()); }
    Index triangle_count() const;

    const VectorField& vertices() const { return verts_; }
    const std::vector<Triangle>& triangles() const;
    const VectorField& reference_vertices() const { return *reference_; }

    // Incident triangle ids per vertex, each list in increasing order.
    const std::vector<std::vector<Index>>& vertex_stars() const;

private:
    SurfaceMesh() = default;

    struct Topology {
        std::vector<Triangle> triangles;
        std::vector<std::vector<Index>> stars;
    };
    std::shared_ptr<const Topology> topo_;
    std::shared_ptr<const VectorField> reference_;
    VectorField verts_;
};

struct MeshQualityReport {
    double min_angle = 0.0;           // radians, over all triangle angles
    double max_min_area_ratio = 1.0;  // largest element area / smallest
    double max_edge_ratio = 1.0;      // longest edge / shortest edge
    Index degenerate_count = 0;
};

// Doubled-area vector (q2-q1) x (q3-q1); its direction is the element normal.
Vec3 triangle_cross(const Vec3& q1, const Vec3& q2, const Vec3& q3);

// Outward unit normal of element l. Throws DegenerateTriangle when the
// element area falls below 1e-14 times the mean element area.
Vec3 element_normal(const SurfaceMesh& mesh, Index l);

// Half cross-product magnitude; 0 for degenerate elements.
double element_area(const SurfaceMesh& mesh, Index l);

// Normalized area-weighted average of incident element normals. Throws
// ZeroAveragedNormal when the weighted sum has magnitude below 1e-12.
Vec3 averaged_vertex_normal(const SurfaceMesh& mesh, Index k);

// Volume enclosed by the surface, exact for polyhedra.
double enclosed_volume(const SurfaceMesh& mesh);

// Sum of element area times gamma(element normal).
double surface_energy(const SurfaceMesh& mesh,
                      const AnisotropyDensity& density);

// Simple direct-summation references for the two reductions above; the
// production kernels must match them bit for bit.
double enclosed_volume_serial(const SurfaceMesh& mesh);
double surface_energy_serial(const SurfaceMesh& mesh,
                             const AnisotropyDensity& density);

// Simpson-weighted combination of the doubled-area vectors of an element at
// the old, coordinatewise-midpoint, and new positions, normalized by the old
// doubled area. Reduces to the plain element normal when all positions agree.
Vec3 time_weighted_normal(const SurfaceMesh& mesh_old,
                          const VectorField& midpoint_positions,
                          const VectorField& new_positions, Index l);

MeshQualityReport mesh_quality(const SurfaceMesh& mesh);

// Mean element area, used for the relative degeneracy threshold.
double mean_element_area(const SurfaceMesh& mesh);

}  // namespace mdflow
