// Mesh validation, geometric reductions, quality metrics, generators, and
// file I/O. Volume is cross-checked by a convexity certificate plus an
// independent signed-tetrahedron fan from an external point.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "mdflow/errors.hpp"
#include "mdflow/fem.hpp"
#include "mdflow/mesh.hpp"
#include "mdflow/mesh_io.hpp"
#include "mdflow/shapes.hpp"

using namespace mdflow;

namespace {

SurfaceMesh tetrahedron() {
    VectorField v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    std::vector<Triangle> t = {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 3, 2}};
    return SurfaceMesh::create(v, t);
}

Mat3 random_rotation(std::mt19937& rng) {
    std::normal_distribution<double> gauss;
    Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    return q.toRotationMatrix();
}

VectorField mapped(const VectorField& v, auto&& f) {
    VectorField out;
    out.reserve(v.size());
    for (const Vec3& p : v) out.push_back(f(p));
    return out;
}

// Certifies that every vertex lies on or inside every face plane, i.e. the
// mesh is the boundary of the convex hull of its vertex set.
void require_convex(const SurfaceMesh& mesh) {
    const auto& v = mesh.vertices();
    double scale = 0.0;
    for (const Vec3& p : v) scale = std::max(scale, p.norm());
    for (const Triangle& t : mesh.triangles()) {
        Vec3 n = triangle_cross(v[t[0]], v[t[1]], v[t[2]]).normalized();
        double plane = n.dot(v[t[0]]);
        for (const Vec3& p : v)
            REQUIRE(n.dot(p) <= plane + 1e-12 * scale);
    }
}

// Hull volume by summing signed tetrahedra against an external apex; shares
// no code path with enclosed_volume.
double hull_volume_oracle(const SurfaceMesh& mesh) {
    require_convex(mesh);
    const Vec3 apex{10.0, 7.0, 3.0};
    const auto& v = mesh.vertices();
    double vol = 0.0;
    for (const Triangle& t : mesh.triangles()) {
        Eigen::Matrix3d m;
        m.col(0) = v[t[0]] - apex;
        m.col(1) = v[t[1]] - apex;
        m.col(2) = v[t[2]] - apex;
        vol += m.determinant() / 6.0;
    }
    return vol;
}

}  // namespace

TEST_CASE("triangle cross products and orientation") {
    Vec3 n = triangle_cross({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
    CHECK((n.normalized() - Vec3{0, 0, 1}).norm() < 1e-15);
    Vec3 r = triangle_cross({0, 0, 0}, {0, 1, 0}, {1, 0, 0});
    CHECK((r.normalized() - Vec3{0, 0, -1}).norm() < 1e-15);
}

TEST_CASE("validation rejects broken inputs") {
    VectorField v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    // Missing one face: open surface.
    CHECK_THROWS_AS(
        SurfaceMesh::create(v, {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}}),
        OpenSurface);
    // One face flipped: same-direction duplicate edge.
    CHECK_THROWS_AS(SurfaceMesh::create(
                        v, {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 2, 3}}),
                    InconsistentOrientation);
    // Collinear triangle in an otherwise closed configuration.
    VectorField flat = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 0, 1}};
    CHECK_THROWS_AS(SurfaceMesh::create(
                        flat, {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 3, 2}}),
                    DegenerateTriangle);
}

TEST_CASE("element normal and area on the tetrahedron") {
    auto mesh = tetrahedron();
    CHECK((element_normal(mesh, 0) - Vec3{0, 0, -1}).norm() < 1e-14);
    CHECK(element_area(mesh, 0) == doctest::Approx(0.5).epsilon(1e-14));
    // Scaling doubles lengths, quadruples areas.
    auto scaled = mesh.with_vertices(
        mapped(mesh.vertices(), [](const Vec3& p) { return 2.0 * p; }));
    CHECK(element_area(scaled, 0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("enclosed volume: cube, translation, tetrahedron") {
    auto tet = tetrahedron();
    CHECK(enclosed_volume(tet) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));

    auto cube = generate_cuboid(1, 1, 1, 1.0);
    CHECK(cube.vertex_count() == 8);
    CHECK(cube.triangle_count() == 12);
    CHECK(enclosed_volume(cube) == doctest::Approx(1.0).epsilon(1e-12));

    auto moved = cube.with_vertices(mapped(
        cube.vertices(), [](const Vec3& p) { return p + Vec3{5, 5, 5}; }));
    CHECK(enclosed_volume(moved) == doctest::Approx(1.0).epsilon(1e-12));

    std::mt19937 rng(4);
    Mat3 rot = random_rotation(rng);
    auto rotated = cube.with_vertices(
        mapped(cube.vertices(), [&](const Vec3& p) { return rot * p; }));
    CHECK(enclosed_volume(rotated) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("volume and energy scaling laws") {
    auto mesh = generate_icosphere(2);
    auto density = AnisotropyDensity::four_fold(0.3);
    double v1 = enclosed_volume(mesh);
    double w1 = surface_energy(mesh, density);
    auto scaled = mesh.with_vertices(
        mapped(mesh.vertices(), [](const Vec3& p) { return 1.7 * p; }));
    CHECK(enclosed_volume(scaled) ==
          doctest::Approx(std::pow(1.7, 3) * v1).epsilon(1e-12));
    CHECK(surface_energy(scaled, density) ==
          doctest::Approx(std::pow(1.7, 2) * w1).epsilon(1e-12));
}

TEST_CASE("surface energy frozen values on the cube") {
    auto cube = generate_cuboid(1, 1, 1, 1.0);
    CHECK(surface_energy(cube, AnisotropyDensity::isotropic()) ==
          doctest::Approx(6.0).epsilon(1e-13));
    CHECK(surface_energy(cube, AnisotropyDensity::ellipsoidal(1, 1, 2)) ==
          doctest::Approx(8.0).epsilon(1e-13));
}

TEST_CASE("icosphere energy approximates the sphere area") {
    auto mesh = generate_icosphere(4);
    auto beta0 = AnisotropyDensity::four_fold(0.0);
    CHECK(std::abs(surface_energy(mesh, beta0) - 4.0 * M_PI) < 1e-2 * 4 * M_PI);
}

TEST_CASE("reductions match their serial references bitwise") {
    auto mesh = generate_icosphere(3);
    auto density = AnisotropyDensity::three_fold(0.4);
    CHECK(enclosed_volume(mesh) == enclosed_volume_serial(mesh));
    CHECK(surface_energy(mesh, density) ==
          surface_energy_serial(mesh, density));
}

TEST_CASE("averaged vertex normals") {
    auto cube = generate_cuboid(1, 1, 1, 1.0);
    // The corner at (-1/2,-1/2,-1/2) has one incident unit of area per axis
    // direction, so the average points along the diagonal.
    for (Index k = 0; k < cube.vertex_count(); ++k) {
        if ((cube.vertices()[k] - Vec3{-0.5, -0.5, -0.5}).norm() < 1e-12) {
            Vec3 v = averaged_vertex_normal(cube, k);
            CHECK((v - Vec3{-1, -1, -1}.normalized()).norm() < 1e-12);
        }
    }
    auto sphere = generate_icosphere(3);
    for (Index k = 0; k < sphere.vertex_count(); k += 17) {
        Vec3 v = averaged_vertex_normal(sphere, k);
        CHECK((v - sphere.vertices()[k].normalized()).norm() < 3e-2);
        CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("icosphere volume matches the hull oracle") {
    auto mesh = generate_icosphere(3);
    CHECK(mesh.vertex_count() == 642);
    CHECK(mesh.triangle_count() == 1280);
    CHECK(enclosed_volume(mesh) ==
          doctest::Approx(hull_volume_oracle(mesh)).epsilon(1e-10));
}

TEST_CASE("generated meshes are discretely closed") {
    std::vector<SurfaceMesh> meshes;
    meshes.push_back(generate_sphere(1.0, 0.3));
    meshes.push_back(generate_ellipsoid(1, 1, 2, 0.4));
    meshes.push_back(generate_cuboid(6, 1, 1, 0.5));
    meshes.push_back(generate_torus(1.0, 0.5, 0.35));
    for (const auto& mesh : meshes) {
        Vec3 sum = Vec3::Zero();
        double area = 0.0;
        for (Index l = 0; l < mesh.triangle_count(); ++l) {
            const Triangle& t = mesh.triangles()[l];
            sum += 0.5 * triangle_cross(mesh.vertices()[t[0]],
                                        mesh.vertices()[t[1]],
                                        mesh.vertices()[t[2]]);
            area += element_area(mesh, l);
        }
        CHECK(sum.norm() <= 1e-10 * area);
    }
}

TEST_CASE("time-weighted normals") {
    auto mesh = generate_icosphere(1);
    const Index l = 7;
    Vec3 n = element_normal(mesh, l);

    auto same = time_weighted_normal(mesh, mesh.vertices(), mesh.vertices(), l);
    CHECK((same - n).norm() < 1e-14);

    auto shift = mapped(mesh.vertices(),
                        [](const Vec3& p) { return p + Vec3{3, -2, 1}; });
    auto mid = mapped(mesh.vertices(),
                      [](const Vec3& p) { return p + Vec3{1.5, -1, 0.5}; });
    auto translated = time_weighted_normal(mesh, mid, shift, l);
    CHECK((translated - n).norm() < 1e-13);

    auto twice = mapped(mesh.vertices(),
                        [](const Vec3& p) { return 2.0 * p; });
    auto mid15 = mapped(mesh.vertices(),
                        [](const Vec3& p) { return 1.5 * p; });
    auto grown = time_weighted_normal(mesh, mid15, twice, l);
    CHECK((grown - (14.0 / 6.0) * n).norm() < 1e-13);
}

TEST_CASE("mesh quality metrics") {
    auto ico = generate_icosphere(0);
    auto q = mesh_quality(ico);
    CHECK(q.min_angle == doctest::Approx(M_PI / 3).epsilon(1e-12));
    CHECK(q.max_min_area_ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.max_edge_ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.degenerate_count == 0);

    VectorField v = {{0, 0, 0}, {100, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    std::vector<Triangle> t = {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 3, 2}};
    auto needle = SurfaceMesh::create(v, t);
    CHECK(mesh_quality(needle).max_edge_ratio >= 100.0);
}

TEST_CASE("paper-scale cuboid grid") {
    auto mesh = generate_cuboid(6, 1, 1, 6.0 / 41.0);
    CHECK(mesh.vertex_count() == 1248);
    CHECK(mesh.triangle_count() == 2492);
    CHECK(enclosed_volume(mesh) == doctest::Approx(6.0).epsilon(1e-12));
    auto q = mesh_quality(mesh);
    CHECK(q.degenerate_count == 0);
    CHECK(max_edge_length(mesh) <= 2.0 * 6.0 / 41.0);
}

TEST_CASE("paper-scale torus grid") {
    auto mesh = generate_torus(1.0, 0.5, 0.242630);
    CHECK(mesh.vertex_count() == 39 * 13);
    CHECK(mesh.triangle_count() == 2 * 39 * 13);
    CHECK(max_edge_length(mesh) <= 2.0 * 0.242630);
    // Structured torus volume approaches 2 pi^2 R r^2 from below.
    CHECK(std::abs(enclosed_volume(mesh) - 2 * M_PI * M_PI * 0.25) < 0.25);
}

TEST_CASE("ellipsoid volume near the analytic value") {
    auto mesh = generate_ellipsoid(1, 1, 2, 0.2);
    double exact = 4.0 / 3.0 * M_PI * 2.0;
    CHECK(std::abs(enclosed_volume(mesh) - exact) < 0.02 * exact);
}

TEST_CASE("shape spec parsing") {
    CHECK(generate_shape("sphere", 0.5).vertex_count() > 4);
    CHECK(generate_shape("cuboid:1,1,1", 1.0).vertex_count() == 8);
    CHECK_THROWS_AS(generate_shape("cube:1", 1.0), InvalidShapeParams);
    CHECK_THROWS_AS(generate_shape("torus:0.5,1", 0.3), InvalidShapeParams);
    CHECK_THROWS_AS(generate_shape("sphere:-1", 0.3), InvalidShapeParams);
}

TEST_CASE("OFF round trip is exact") {
    auto cube = generate_cuboid(1, 1, 1, 1.0);
    auto path = std::string("roundtrip.off");
    write_mesh_off(path, cube);
    auto back = read_mesh_off(path);
    REQUIRE(back.vertex_count() == cube.vertex_count());
    REQUIRE(back.triangle_count() == cube.triangle_count());
    for (Index k = 0; k < cube.vertex_count(); ++k)
        CHECK(back.vertices()[k] == cube.vertices()[k]);
    for (Index l = 0; l < cube.triangle_count(); ++l)
        CHECK(back.triangles()[l] == cube.triangles()[l]);
    std::remove(path.c_str());
}

TEST_CASE("OFF reader rejects malformed files") {
    auto write_file = [](const std::string& path, const std::string& text) {
        std::ofstream out(path);
        out << text;
    };
    write_file("quad.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
    CHECK_THROWS_AS(read_mesh_off("quad.off"), NonTriangleFace);
    std::remove("quad.off");

    write_file("open.off",
               "OFF\n4 3 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
               "3 0 2 1\n3 0 1 3\n3 1 2 3\n");
    CHECK_THROWS_AS(read_mesh_off("open.off"), OpenSurface);
    std::remove("open.off");

    write_file("garbage.off", "OFF\n2 1 0\n0 0 zebra\n");
    try {
        read_mesh_off("garbage.off");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::remove("garbage.off");
}

TEST_CASE("VTK writer emits polydata with fields") {
    auto tet = tetrahedron();
    ScalarField mu = {0.0, 1.0, 2.0, 3.0};
    write_mesh_vtk("snap.vtk", tet, {{"mu", &mu}});
    std::ifstream in("snap.vtk");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    CHECK(text.find("DATASET POLYDATA") != std::string::npos);
    CHECK(text.find("POINTS 4 double") != std::string::npos);
    CHECK(text.find("POLYGONS 4 16") != std::string::npos);
    CHECK(text.find("SCALARS mu double 1") != std::string::npos);
    std::remove("snap.vtk");
}
