#include "mdflow/shapes.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

#include "mdflow/errors.hpp"

namespace mdflow {

namespace {

struct RawMesh {
    VectorField vertices;
    std::vector<Triangle> triangles;
};

// Icosahedron with poles on the z-axis so the subdivided sphere keeps exact
// vertices at (0,0,+-1).
RawMesh icosahedron() {
    RawMesh m;
    const double c = 1.0 / std::sqrt(5.0);
    const double s = 2.0 / std::sqrt(5.0);
    m.vertices.push_back({0.0, 0.0, 1.0});
    for (int i = 0; i < 5; ++i) {
        double a = 2.0 * M_PI * i / 5.0;
        m.vertices.push_back({s * std::cos(a), s * std::sin(a), c});
    }
    for (int i = 0; i < 5; ++i) {
        double a = 2.0 * M_PI * i / 5.0 + M_PI / 5.0;
        m.vertices.push_back({s * std::cos(a), s * std::sin(a), -c});
    }
    m.vertices.push_back({0.0, 0.0, -1.0});
    auto up = [](int i) { return 1 + i % 5; };
    auto lo = [](int i) { return 6 + i % 5; };
    for (int i = 0; i < 5; ++i) {
        m.triangles.push_back({0, up(i), up(i + 1)});
        m.triangles.push_back({up(i), lo(i), up(i + 1)});
        m.triangles.push_back({lo(i), lo(i + 1), up(i + 1)});
        m.triangles.push_back({11, lo(i + 1), lo(i)});
    }
    return m;
}

// One 4-to-1 refinement with new vertices pushed onto the unit sphere.
void subdivide_on_sphere(RawMesh& m) {
    std::unordered_map<std::uint64_t, Index> midpoint;
    auto mid = [&](Index a, Index b) {
        std::uint64_t key =
            (static_cast<std::uint64_t>(std::min(a, b)) << 32) |
            static_cast<std::uint64_t>(std::max(a, b));
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        Vec3 p = (m.vertices[a] + m.vertices[b]).normalized();
        Index id = static_cast<Index>(m.vertices.size());
        m.vertices.push_back(p);
        midpoint.emplace(key, id);
        return id;
    };
    std::vector<Triangle> refined;
    refined.reserve(4 * m.triangles.size());
    for (const Triangle& t : m.triangles) {
        Index m01 = mid(t[0], t[1]);
        Index m12 = mid(t[1], t[2]);
        Index m02 = mid(t[0], t[2]);
        refined.push_back({t[0], m01, m02});
        refined.push_back({m01, t[1], m12});
        refined.push_back({m02, m12, t[2]});
        refined.push_back({m01, m12, m02});
    }
    m.triangles = std::move(refined);
}

double raw_max_edge(const RawMesh& m, const Vec3& scale) {
    double worst = 0.0;
    for (const Triangle& t : m.triangles)
        for (int i = 0; i < 3; ++i) {
            Vec3 d = m.vertices[t[i]] - m.vertices[t[(i + 1) % 3]];
            worst = std::max(worst,
                             d.cwiseProduct(scale).norm());
        }
    return worst;
}

SurfaceMesh scaled_icosphere(const Vec3& scale, double target_h) {
    if (target_h <= 0.0)
        throw InvalidShapeParams("target resolution must be positive");
    RawMesh m = icosahedron();
    int level = 0;
    while (raw_max_edge(m, scale) > target_h) {
        if (++level > 8)
            throw InvalidShapeParams("resolution needs more than 8 sphere "
                                     "subdivisions; refusing");
        subdivide_on_sphere(m);
    }
    for (Vec3& v : m.vertices) v = v.cwiseProduct(scale);
    return SurfaceMesh::create(std::move(m.vertices), std::move(m.triangles));
}

}  // namespace

SurfaceMesh generate_icosphere(int subdivisions) {
    if (subdivisions < 0 || subdivisions > 8)
        throw InvalidShapeParams("subdivision count out of range");
    RawMesh m = icosahedron();
    for (int i = 0; i < subdivisions; ++i) subdivide_on_sphere(m);
    return SurfaceMesh::create(std::move(m.vertices), std::move(m.triangles));
}

SurfaceMesh generate_sphere(double radius, double target_h) {
    if (radius <= 0.0) throw InvalidShapeParams("sphere radius must be positive");
    return scaled_icosphere(Vec3::Constant(radius), target_h);
}

SurfaceMesh generate_ellipsoid(double a, double b, double c, double target_h) {
    if (a <= 0.0 || b <= 0.0 || c <= 0.0)
        throw InvalidShapeParams("ellipsoid semi-axes must be positive");
    return scaled_icosphere({a, b, c}, target_h);
}

SurfaceMesh generate_cuboid(double lx, double ly, double lz, double target_h) {
    if (lx <= 0.0 || ly <= 0.0 || lz <= 0.0 || target_h <= 0.0)
        throw InvalidShapeParams("cuboid dimensions must be positive");
    const int nx = std::max<int>(1, static_cast<int>(std::ceil(lx / target_h)));
    const int ny = std::max<int>(1, static_cast<int>(std::ceil(ly / target_h)));
    const int nz = std::max<int>(1, static_cast<int>(std::ceil(lz / target_h)));
    const double dx = lx / nx, dy = ly / ny, dz = lz / nz;

    VectorField vertices;
    std::vector<Triangle> triangles;
    std::unordered_map<std::uint64_t, Index> lattice;
    auto node = [&](int i, int j, int k) {
        std::uint64_t key = (static_cast<std::uint64_t>(i) << 42) |
                            (static_cast<std::uint64_t>(j) << 21) |
                            static_cast<std::uint64_t>(k);
        auto it = lattice.find(key);
        if (it != lattice.end()) return it->second;
        Index id = static_cast<Index>(vertices.size());
        vertices.push_back({i * dx - lx / 2, j * dy - ly / 2, k * dz - lz / 2});
        lattice.emplace(key, id);
        return id;
    };
    // Emits one face grid. corner/du/dv are integer lattice steps; the quad
    // (p, p+du, p+du+dv, p+dv) must read counterclockwise from outside.
    auto face = [&](std::array<int, 3> corner, std::array<int, 3> du, int nu,
                    std::array<int, 3> dv, int nv) {
        for (int u = 0; u < nu; ++u)
            for (int v = 0; v < nv; ++v) {
                auto at = [&](int uu, int vv) {
                    return node(corner[0] + uu * du[0] + vv * dv[0],
                                corner[1] + uu * du[1] + vv * dv[1],
                                corner[2] + uu * du[2] + vv * dv[2]);
                };
                Index p00 = at(u, v), p10 = at(u + 1, v);
                Index p11 = at(u + 1, v + 1), p01 = at(u, v + 1);
                triangles.push_back({p00, p10, p11});
                triangles.push_back({p00, p11, p01});
            }
    };
    face({0, 0, nz}, {1, 0, 0}, nx, {0, 1, 0}, ny);   // top, normal +z
    face({0, 0, 0}, {0, 1, 0}, ny, {1, 0, 0}, nx);    // bottom, normal -z
    face({0, 0, 0}, {1, 0, 0}, nx, {0, 0, 1}, nz);    // front, normal -y
    face({0, ny, 0}, {0, 0, 1}, nz, {1, 0, 0}, nx);   // back, normal +y
    face({0, 0, 0}, {0, 0, 1}, nz, {0, 1, 0}, ny);    // left, normal -x
    face({nx, 0, 0}, {0, 1, 0}, ny, {0, 0, 1}, nz);   // right, normal +x
    return SurfaceMesh::create(std::move(vertices), std::move(triangles));
}

SurfaceMesh generate_torus(double big_radius, double small_radius,
                           double target_h) {
    if (big_radius <= 0.0 || small_radius <= 0.0 ||
        small_radius >= big_radius)
        throw InvalidShapeParams("torus needs 0 < r < R");
    if (target_h <= 0.0)
        throw InvalidShapeParams("target resolution must be positive");
    const double outer = 2.0 * M_PI * (big_radius + small_radius);
    const double tube = 2.0 * M_PI * small_radius;
    const int nu = std::max<int>(3, static_cast<int>(std::ceil(outer / target_h)));
    const int nv = std::max<int>(3, static_cast<int>(std::ceil(tube / target_h)));

    VectorField vertices;
    vertices.reserve(static_cast<std::size_t>(nu) * nv);
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j < nv; ++j) {
            double theta = 2.0 * M_PI * i / nu;
            double phi = 2.0 * M_PI * j / nv;
            double ring = big_radius + small_radius * std::cos(phi);
            vertices.push_back({ring * std::cos(theta), ring * std::sin(theta),
                                small_radius * std::sin(phi)});
        }
    auto at = [&](int i, int j) {
        return static_cast<Index>((i % nu) * nv + (j % nv));
    };
    std::vector<Triangle> triangles;
    triangles.reserve(2 * static_cast<std::size_t>(nu) * nv);
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j < nv; ++j) {
            // (theta, phi) is an outward-oriented parameterization.
            triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    return SurfaceMesh::create(std::move(vertices), std::move(triangles));
}

SurfaceMesh generate_shape(const std::string& spec, double target_h) {
    auto bad = [&spec]() -> InvalidShapeParams {
        return InvalidShapeParams(
            "bad shape spec '" + spec +
            "' (expect sphere[:r] | ellipsoid:a,b,c | cuboid:lx,ly,lz | "
            "torus:R,r)");
    };
    std::string head = spec;
    std::vector<double> params;
    auto colon = spec.find(':');
    if (colon != std::string::npos) {
        head = spec.substr(0, colon);
        std::stringstream ss(spec.substr(colon + 1));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t pos = 0;
                params.push_back(std::stod(tok, &pos));
                if (pos != tok.size()) throw bad();
            } catch (const std::logic_error&) {
                throw bad();
            }
        }
    }
    if (head == "sphere") {
        if (params.empty()) return generate_sphere(1.0, target_h);
        if (params.size() == 1) return generate_sphere(params[0], target_h);
        throw bad();
    }
    if (head == "ellipsoid" && params.size() == 3)
        return generate_ellipsoid(params[0], params[1], params[2], target_h);
    if (head == "cuboid" && params.size() == 3)
        return generate_cuboid(params[0], params[1], params[2], target_h);
    if (head == "torus" && params.size() == 2)
        return generate_torus(params[0], params[1], target_h);
    throw bad();
}

double max_edge_length(const SurfaceMesh& mesh) {
    const auto& v = mesh.vertices();
    double worst = 0.0;
    for (const Triangle& t : mesh.triangles())
        for (int i = 0; i < 3; ++i)
            worst = std::max(worst, (v[t[i]] - v[t[(i + 1) % 3]]).norm());
    return worst;
}

}  // namespace mdflow
