// Mesh generators for the shapes the experiments start from: spheres and
// ellipsoids by icosahedron subdivision, cuboids and tori by structured
// grids. All outputs pass SurfaceMesh validation and have max edge length
// within a factor 2 of the requested resolution.
#pragma once

#include <string>

#include "mdflow/mesh.hpp"

namespace mdflow {

SurfaceMesh generate_sphere(double radius, double target_h);
SurfaceMesh generate_ellipsoid(double a, double b, double c, double target_h);
SurfaceMesh generate_cuboid(double lx, double ly, double lz, double target_h);
SurfaceMesh generate_torus(double big_radius, double small_radius,
                           double target_h);

// Unit sphere with a fixed subdivision count (10*4^n + 2 vertices); the pole
// vertices sit exactly at (0,0,+-1).
SurfaceMesh generate_icosphere(int subdivisions);

// Grammar: "sphere", "sphere:r", "ellipsoid:a,b,c", "cuboid:lx,ly,lz",
// "torus:R,r".
SurfaceMesh generate_shape(const std::string& spec, double target_h);

// Longest edge in the mesh (the resolution h reported in manifests).
double max_edge_length(const SurfaceMesh& mesh);

}  // namespace mdflow
