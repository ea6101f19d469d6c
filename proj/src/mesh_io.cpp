#include "mdflow/mesh_io.hpp"

#include <fstream>
#include <sstream>

#include "mdflow/errors.hpp"

namespace mdflow {

namespace {

// Pulls the next content line (skipping blanks and # comments), tracking the
// line number for error messages.
bool next_content_line(std::istream& in, std::string& line, long& lineno) {
    while (std::getline(in, line)) {
        ++lineno;
        auto pos = line.find_first_not_of(" \t\r");
        if (pos == std::string::npos || line[pos] == '#') continue;
        return true;
    }
    return false;
}

[[noreturn]] void fail(long lineno, const std::string& what) {
    throw ParseError("line " + std::to_string(lineno) + ": " + what);
}

}  // namespace

SurfaceMesh read_mesh_off(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    long lineno = 0;
    std::string line;

    if (!next_content_line(in, line, lineno)) fail(lineno, "empty file");
    {
        std::istringstream ls(line);
        std::string magic;
        ls >> magic;
        if (magic != "OFF") fail(lineno, "expected OFF header");
    }
    if (!next_content_line(in, line, lineno)) fail(lineno, "missing counts");
    long nv = 0, nf = 0, ne = 0;
    {
        std::istringstream ls(line);
        if (!(ls >> nv >> nf)) fail(lineno, "expected vertex and face counts");
        ls >> ne;  // edge count is optional and ignored
        if (nv <= 0 || nf <= 0) fail(lineno, "counts must be positive");
    }

    VectorField vertices;
    vertices.reserve(nv);
    for (long i = 0; i < nv; ++i) {
        if (!next_content_line(in, line, lineno))
            fail(lineno, "unexpected end of file in vertex block");
        std::istringstream ls(line);
        Vec3 p;
        if (!(ls >> p[0] >> p[1] >> p[2]))
            fail(lineno, "expected three coordinates");
        vertices.push_back(p);
    }

    std::vector<Triangle> triangles;
    triangles.reserve(nf);
    for (long i = 0; i < nf; ++i) {
        if (!next_content_line(in, line, lineno))
            fail(lineno, "unexpected end of file in face block");
        std::istringstream ls(line);
        long count = 0;
        if (!(ls >> count)) fail(lineno, "expected face vertex count");
        if (count != 3)
            throw NonTriangleFace("line " + std::to_string(lineno) +
                                  ": face with " + std::to_string(count) +
                                  " vertices");
        Triangle t;
        if (!(ls >> t[0] >> t[1] >> t[2]))
            fail(lineno, "expected three vertex indices");
        triangles.push_back(t);
    }
    return SurfaceMesh::create(std::move(vertices), std::move(triangles));
}

void write_mesh_off(const std::string& path, const SurfaceMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "OFF\n"
        << mesh.vertex_count() << ' ' << mesh.triangle_count() << " 0\n";
    for (const Vec3& p : mesh.vertices())
        out << format_full(p[0]) << ' ' << format_full(p[1]) << ' '
            << format_full(p[2]) << '\n';
    for (const Triangle& t : mesh.triangles())
        out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    if (!out) throw Error("short write to '" + path + "'");
}

void write_mesh_vtk(
    const std::string& path, const SurfaceMesh& mesh,
    const std::vector<std::pair<std::string, const ScalarField*>>&
        point_fields) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "# vtk DataFile Version 3.0\n"
        << "surface snapshot\n"
        << "ASCII\n"
        << "DATASET POLYDATA\n"
        << "POINTS " << mesh.vertex_count() << " double\n";
    for (const Vec3& p : mesh.vertices())
        out << format_full(p[0]) << ' ' << format_full(p[1]) << ' '
            << format_full(p[2]) << '\n';
    out << "POLYGONS " << mesh.triangle_count() << ' '
        << 4 * mesh.triangle_count() << '\n';
    for (const Triangle& t : mesh.triangles())
        out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    if (!point_fields.empty()) {
        out << "POINT_DATA " << mesh.vertex_count() << '\n';
        for (const auto& [name, field] : point_fields) {
            if (static_cast<Index>(field->size()) != mesh.vertex_count())
                throw FieldMeshMismatch("field '" + name +
                                        "' length does not match mesh");
            out << "SCALARS " << name << " double 1\n"
                << "LOOKUP_TABLE default\n";
            for (double v : *field) out << format_full(v) << '\n';
        }
    }
    if (!out) throw Error("short write to '" + path + "'");
}

}  // namespace mdflow
