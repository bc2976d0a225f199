#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include "support/synthetic.hpp"
#include "surfdist/flatten.hpp"

using namespace surfdist;

TEST_CASE("boundary vertices land exactly on the unit circle") {
    for (TriMesh mesh : {synth::flat_disk(6, 24), synth::spherical_cap(8, 32, 0.3)}) {
        FlatMap flat = flatten(mesh);
        int boundary = 0;
        for (int i = 0; i < flat.vertex_count(); ++i)
            if (flat.is_boundary[i]) {
                ++boundary;
                CHECK(std::abs(std::abs(flat.disk_coords[i]) - 1.0) < 1e-12);
                CHECK(flat.planar_weight[i] == 0.0);
            } else {
                CHECK(std::abs(flat.disk_coords[i]) < 1.0);
                CHECK(flat.planar_weight[i] > 0.0);
            }
        CHECK(boundary == 24 * (mesh.specimen_id == "disk" ? 1 : 0) +
                              32 * (mesh.specimen_id == "cap" ? 1 : 0));
    }
}

TEST_CASE("flattening a planar disk is near the identity") {
    const int rings = 10;
    TriMesh disk = synth::flat_disk(rings, 40);
    FlatMap flat = flatten(disk);
    // the quad diagonals of a polar grid sit at cot ~ 0, so a modest number
    // of slightly negative weights is normal; they are counted, not fatal
    int edges = (3 * disk.face_count() + 40) / 2;
    CHECK(flat.clamped_weight_count < edges / 4);
    CHECK(mean_angle_distortion(disk, flat.disk_coords) < 0.02);

    // the conformal factor of a planar patch is constant; its value sits
    // above 1/pi by the interior-quadrature band, an O(1/rings) bias
    double mean = 0.0, mass = 0.0;
    for (int i = 0; i < flat.vertex_count(); ++i) {
        mean += flat.factor[i] * flat.planar_weight[i];
        mass += flat.planar_weight[i];
    }
    mean /= mass;
    for (int i = 0; i < flat.vertex_count(); ++i)
        CHECK(std::abs(flat.factor[i] - mean) < 0.02 * mean);
    CHECK(std::abs(mean - 1.0 / M_PI) < (1.5 / rings) / M_PI);
}

TEST_CASE("acute meshes need no weight clamping") {
    TriMesh m;
    m.vertices.emplace_back(0, 0, 0);
    for (int j = 0; j < 6; ++j)
        m.vertices.emplace_back(std::cos(M_PI * j / 3), std::sin(M_PI * j / 3), 0.0);
    for (int j = 0; j < 6; ++j) m.faces.push_back({0, 1 + j, 1 + (j + 1) % 6});
    FlatMap flat = flatten(m);
    CHECK(flat.clamped_weight_count == 0);
}

TEST_CASE("the conformal factor is a probability density") {
    for (TriMesh mesh : {synth::bump_mesh(10, 40, synth::family_bumps(1, 2)),
                         synth::spherical_cap(10, 40, 0.4)}) {
        FlatMap flat = flatten(mesh);
        double planar = 0.0, hyper = 0.0;
        auto eta = hyperbolic_vertex_measure(flat);
        for (int i = 0; i < flat.vertex_count(); ++i) {
            CHECK(flat.factor[i] > 0.0);
            planar += flat.factor[i] * flat.planar_weight[i];
            hyper += flat.hyper_factor[i] * eta[i];
        }
        CHECK(std::abs(planar - 1.0) < 1e-13);
        // the hyperbolic density against d eta carries the same mass
        CHECK(std::abs(hyper - planar) < 1e-9);
    }
}

TEST_CASE("rotational symmetry of the cap survives flattening") {
    const int rings = 8, segs = 32;
    FlatMap flat = flatten(synth::spherical_cap(rings, segs, 0.3));
    for (int k = 1; k <= rings; ++k) {
        int base = 1 + (k - 1) * segs;
        for (int j = 1; j < segs; ++j) {
            CHECK(std::abs(std::abs(flat.disk_coords[base + j]) -
                           std::abs(flat.disk_coords[base])) < 1e-9);
            CHECK(std::abs(flat.factor[base + j] - flat.factor[base]) < 1e-9);
        }
    }
}

TEST_CASE("angle distortion decreases under refinement of the cap") {
    double prev = 1e9;
    for (int rings : {8, 16, 32}) {
        TriMesh cap = synth::spherical_cap(rings, 4 * rings, 0.3);
        FlatMap flat = flatten(cap);
        double distortion = mean_angle_distortion(cap, flat.disk_coords);
        CHECK(distortion < prev);
        prev = distortion;
    }
}

TEST_CASE("recentring preserves masses and the hyperbolic density") {
    FlatMap flat = flatten(synth::bump_mesh(8, 32, synth::family_bumps(0, 1)));
    MobiusTransform m{1.1, Complex(0.3, -0.2)};
    FlatMap moved = recentre(flat, m);
    double planar = 0.0;
    for (int i = 0; i < moved.vertex_count(); ++i) {
        CHECK(std::abs(moved.disk_coords[i] - mobius_apply(m, flat.disk_coords[i])) < 1e-14);
        CHECK(std::abs(moved.hyper_factor[i] - flat.hyper_factor[i]) < 1e-10);
        planar += moved.factor[i] * moved.planar_weight[i];
    }
    CHECK(std::abs(planar - 1.0) < 1e-12);
}

TEST_CASE("canonical recentring zeroes the density centroid") {
    FlatMap flat = flatten(synth::bump_mesh(9, 36, synth::family_bumps(2, 0)));
    Complex centroid(0, 0);
    for (int i = 0; i < flat.vertex_count(); ++i)
        centroid += flat.factor[i] * flat.planar_weight[i] * flat.disk_coords[i];
    CHECK(std::abs(centroid) < 1e-8);
}

TEST_CASE("conformal_factor recomputes the stored density") {
    TriMesh mesh = synth::bump_mesh(7, 28, synth::family_bumps(1, 0));
    FlatMap flat = flatten(mesh);
    auto f = conformal_factor(mesh, flat.disk_coords);
    for (int i = 0; i < flat.vertex_count(); ++i)
        CHECK(f[i] == doctest::Approx(flat.factor[i]).epsilon(1e-12));
}

TEST_CASE("flat map CSV export lists every vertex") {
    FlatMap flat = flatten(synth::flat_disk(4, 16));
    std::stringstream buf;
    save_flatmap_csv(flat, buf);
    std::string line;
    std::getline(buf, line);
    CHECK(line == "vertex,re,im,factor,hyper_factor");
    int rows = 0;
    while (std::getline(buf, line))
        if (!line.empty()) ++rows;
    CHECK(rows == flat.vertex_count());
}

TEST_CASE("locator finds faces and reproduces linear functions") {
    FlatMap flat = flatten(synth::bump_mesh(8, 32, synth::family_bumps(0, 0)));
    DiskLocator locator(flat);

    std::vector<double> linear(flat.vertex_count());
    for (int i = 0; i < flat.vertex_count(); ++i)
        linear[i] = 0.7 * flat.disk_coords[i].real() - 1.3 * flat.disk_coords[i].imag() + 0.25;

    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 500; ++k) {
        const auto& f = flat.faces[static_cast<std::size_t>(u(rng) * flat.faces.size())];
        double b0 = u(rng), b1 = u(rng) * (1.0 - b0), b2 = 1.0 - b0 - b1;
        Complex z = b0 * flat.disk_coords[f[0]] + b1 * flat.disk_coords[f[1]] +
                    b2 * flat.disk_coords[f[2]];
        auto hit = locator.locate(z);
        REQUIRE(hit.has_value());
        const auto& g = flat.faces[hit->face];
        Complex back = hit->bary[0] * flat.disk_coords[g[0]] + hit->bary[1] * flat.disk_coords[g[1]] +
                       hit->bary[2] * flat.disk_coords[g[2]];
        CHECK(std::abs(back - z) < 1e-9);
        CHECK(std::abs(locator.interpolate(linear, z) -
                       (0.7 * z.real() - 1.3 * z.imag() + 0.25)) < 1e-9);
    }
}

TEST_CASE("clamped location projects outside points onto the triangulation") {
    FlatMap flat = flatten(synth::flat_disk(6, 24));
    DiskLocator locator(flat);
    for (int k = 0; k < 64; ++k) {
        Complex z = std::polar(1.05, 2.0 * M_PI * k / 64.0);
        SurfacePoint p = locator.locate_clamped(z);
        REQUIRE(p.face >= 0);
        const auto& f = flat.faces[p.face];
        Complex q = p.bary[0] * flat.disk_coords[f[0]] + p.bary[1] * flat.disk_coords[f[1]] +
                    p.bary[2] * flat.disk_coords[f[2]];
        // nearest point of the polygon: within the circle-to-chord gap
        CHECK(std::abs(q - z) < 0.06 + 0.02);
        CHECK(std::abs(q) <= 1.0 + 1e-12);
    }
    // interior points clamp to themselves
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        Complex z = std::polar(0.8 * std::sqrt(u(rng)), 2.0 * M_PI * u(rng));
        SurfacePoint p = locator.locate_clamped(z);
        const auto& f = flat.faces[p.face];
        Complex q = p.bary[0] * flat.disk_coords[f[0]] + p.bary[1] * flat.disk_coords[f[1]] +
                    p.bary[2] * flat.disk_coords[f[2]];
        CHECK(std::abs(q - z) < 1e-9);
    }
}

TEST_CASE("hyperbolic vertex measure matches the planar weights") {
    FlatMap flat = flatten(synth::bump_mesh(6, 24, synth::family_bumps(2, 1)));
    auto eta = hyperbolic_vertex_measure(flat);
    for (int i = 0; i < flat.vertex_count(); ++i) {
        if (flat.is_boundary[i]) {
            CHECK(eta[i] == 0.0);
        } else {
            double one_minus = 1.0 - std::norm(flat.disk_coords[i]);
            CHECK(eta[i] == doctest::Approx(flat.planar_weight[i] / (one_minus * one_minus))
                                .epsilon(1e-12));
        }
    }
}
