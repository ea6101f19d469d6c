// Mesh file I/O: OFF as the interchange format (read and write) and legacy
// ASCII VTK polydata as a write-only visualization format with optional
// per-vertex scalar fields.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mdflow/mesh.hpp"

namespace mdflow {

SurfaceMesh read_mesh_off(const std::string& path);

void write_mesh_off(const std::string& path, const SurfaceMesh& mesh);

void write_mesh_vtk(
    const std::string& path, const SurfaceMesh& mesh,
    const std::vector<std::pair<std::string, const ScalarField*>>&
        point_fields = {});

}  // namespace mdflow
