#include "doctest.h"

#include <cmath>

#include "mvopt/camera.hpp"
#include "mvopt/rng.hpp"

using namespace mvopt;

namespace {

cam::ViewParams view_at(const Vec3& pos, const Vec3& dir, const Vec3& up, double fov = 60.0) {
    cam::ViewParams v;
    v.view_id = 1;
    v.pos = pos;
    v.view_dir = normalized(dir);
    v.view_up = normalized(up);
    v.fov_y_deg = fov;
    return v;
}

cam::ViewParams random_view(rng::Engine& eng) {
    Vec3 dir = rng::unit_vector(eng);
    Vec3 up = rng::unit_vector(eng);
    while (std::abs(dot(dir, up)) > 0.99) up = rng::unit_vector(eng);
    return view_at({rng::uniform(eng, -50, 50), rng::uniform(eng, -50, 50), rng::uniform(eng, -50, 50)},
                   dir, up, rng::uniform(eng, cam::kMinFovDeg, cam::kMaxFovDeg));
}

}  // namespace

TEST_CASE("camera_basis canonical frame") {
    const auto b = cam::camera_basis(view_at({0, 0, 0}, {0, 0, -1}, {0, 1, 0}));
    CHECK(norm(b.right - Vec3{1, 0, 0}) < 1e-12);
    CHECK(norm(b.up - Vec3{0, 1, 0}) < 1e-12);
    CHECK(norm(b.forward - Vec3{0, 0, -1}) < 1e-12);
}

TEST_CASE("camera_basis rejects parallel dir and up") {
    auto v = view_at({0, 0, 0}, {0, 0, -1}, {0, 1, 0});
    v.view_up = v.view_dir;
    CHECK_THROWS_AS(cam::camera_basis(v), cam::DegenerateFrameError);
    v.view_up = -v.view_dir;
    CHECK_THROWS_AS(cam::camera_basis(v), cam::DegenerateFrameError);
}

TEST_CASE("camera_basis re-orthogonalizes a skewed up hint") {
    const auto v = view_at({0, 0, 0}, {0, 0, -1}, {0.2, 1.0, -0.3});
    const auto b = cam::camera_basis(v);
    CHECK(std::abs(dot(b.up, b.forward)) < 1e-9);
    CHECK(std::abs(dot(b.up, b.right)) < 1e-9);
    CHECK(norm(b.up) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("camera_basis is orthonormal on random frames") {
    rng::Engine eng(21);
    for (int i = 0; i < 2000; ++i) {
        const auto v = random_view(eng);
        const auto b = cam::camera_basis(v);
        CHECK(std::abs(dot(b.right, b.up)) < 1e-9);
        CHECK(std::abs(dot(b.up, b.forward)) < 1e-9);
        CHECK(std::abs(dot(b.forward, b.right)) < 1e-9);
        CHECK(norm(b.right) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(norm(b.up) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(b.forward == v.view_dir);
        // up = right x forward fixes the handedness: right x up = -forward.
        CHECK(norm(cross(b.right, b.up) + b.forward) < 1e-9);
    }
}

TEST_CASE("ndc_of_point closed forms") {
    const auto v = view_at({0, 0, 0}, {0, 0, -1}, {0, 1, 0}, 90.0);

    SUBCASE("point on the axis projects to the center") {
        const auto n = cam::ndc_of_point(v, {0, 0, -10});
        REQUIRE(n.has_value());
        CHECK(n->x == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(n->y == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(n->depth == doctest::Approx(10.0).epsilon(1e-12));
    }
    SUBCASE("fov 90: x = z*tan(45) lands on the right edge") {
        const double z = 7.0;
        const auto n = cam::ndc_of_point(v, {z * std::tan(deg_to_rad(45)), 0, -z});
        REQUIRE(n.has_value());
        CHECK(n->x == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(n->y == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("behind the camera is absent") {
        CHECK_FALSE(cam::ndc_of_point(v, {0, 0, 5}).has_value());
        CHECK_FALSE(cam::ndc_of_point(v, v.pos).has_value());
    }
    SUBCASE("outside the square is absent") {
        CHECK_FALSE(cam::ndc_of_point(v, {100, 0, -5}).has_value());
    }
    SUBCASE("depth is euclidean distance, not forward depth") {
        const Vec3 p{3, 4, -10};
        const auto n = cam::ndc_of_point(v, p);
        REQUIRE(n.has_value());
        CHECK(n->depth == doctest::Approx(norm(p - v.pos)).epsilon(1e-12));
    }
}

TEST_CASE("ndc is antisymmetric under reflection across the view axis") {
    rng::Engine eng(31);
    int tested = 0;
    while (tested < 1000) {
        const auto v = random_view(eng);
        const auto b = cam::camera_basis(v);
        const double fwd = rng::uniform(eng, 1.0, 80.0);
        const double rx = rng::uniform(eng, -0.5, 0.5) * fwd;
        const double ry = rng::uniform(eng, -0.5, 0.5) * fwd;
        const Vec3 p = v.pos + b.forward * fwd + b.right * rx + b.up * ry;
        const Vec3 q = v.pos + b.forward * fwd - b.right * rx - b.up * ry;
        const auto np = cam::ndc_of_point(v, p);
        const auto nq = cam::ndc_of_point(v, q);
        if (!np || !nq) continue;
        ++tested;
        CHECK(np->x == doctest::Approx(-nq->x).epsilon(1e-9));
        CHECK(np->y == doctest::Approx(-nq->y).epsilon(1e-9));
    }
}

TEST_CASE("pixel_ray center of an odd image is the view direction") {
    rng::Engine eng(41);
    for (int i = 0; i < 200; ++i) {
        const auto v = random_view(eng);
        const auto ray = cam::pixel_ray(v, 65, 65, 32, 32);
        CHECK(ray.origin == v.pos);
        CHECK(norm(ray.dir - v.view_dir) < 1e-9);
        CHECK(norm(ray.dir) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("2x2 fov-90 corner rays hit +-0.5 in camera space") {
    // At fov 90 the half-plane is tan(45) = 1, so the pixel centers of a 2x2
    // image sit at ndc +-0.5, i.e. camera-space x, y = +-0.5 per unit forward.
    const auto v = view_at({0, 0, 0}, {0, 0, -1}, {0, 1, 0}, 90.0);
    const auto b = cam::camera_basis(v);
    struct Case {
        int px, py;
        double cx, cy;
    };
    // Row 0 is the TOP of the image (+y up in camera space).
    const Case cases[] = {{0, 0, -0.5, 0.5}, {1, 0, 0.5, 0.5}, {0, 1, -0.5, -0.5}, {1, 1, 0.5, -0.5}};
    for (const auto& c : cases) {
        const auto ray = cam::pixel_ray(v, 2, 2, c.px, c.py);
        const Vec3 expect = normalized(b.forward + b.right * c.cx + b.up * c.cy);
        CHECK(norm(ray.dir - expect) < 1e-12);
    }
}

TEST_CASE("pixel_ray rejects out-of-range pixels") {
    const auto v = view_at({0, 0, 0}, {0, 0, -1}, {0, 1, 0});
    CHECK_THROWS_AS(cam::pixel_ray(v, 4, 4, 4, 0), std::out_of_range);
    CHECK_THROWS_AS(cam::pixel_ray(v, 4, 4, 0, -1), std::out_of_range);
}

TEST_CASE("points on a pixel ray project back into that pixel") {
    rng::Engine eng(51);
    const int res = 32;
    for (int i = 0; i < 2000; ++i) {
        const auto v = random_view(eng);
        const int px = static_cast<int>(rng::below(eng, res));
        const int py = static_cast<int>(rng::below(eng, res));
        const auto ray = cam::pixel_ray(v, res, res, px, py);
        const Vec3 p = ray.origin + ray.dir * rng::uniform(eng, 0.5, 100.0);
        const auto n = cam::ndc_of_point(v, p);
        REQUIRE(n.has_value());
        // ndc -> pixel column/row, matching the renderer's mapping.
        const int bx = std::min(res - 1, static_cast<int>((n->x + 1.0) * 0.5 * res));
        const int by = std::min(res - 1, static_cast<int>((1.0 - n->y) * 0.5 * res));
        CHECK(bx == px);
        CHECK(by == py);
    }
}

TEST_CASE("project then re-project along the pixel ray reproduces the point") {
    rng::Engine eng(61);
    int tested = 0;
    while (tested < 1000) {
        const auto v = random_view(eng);
        const auto b = cam::camera_basis(v);
        const double fwd = rng::uniform(eng, 1.0, 200.0);
        const double half = std::tan(deg_to_rad(v.fov_y_deg / 2.0));
        const Vec3 p = v.pos + b.forward * fwd + b.right * (rng::uniform(eng, -half, half) * fwd) +
                       b.up * (rng::uniform(eng, -half, half) * fwd);
        const auto n = cam::ndc_of_point(v, p);
        if (!n) continue;  // landed exactly outside the closed square
        ++tested;
        // Rebuild the ray through the projected ndc and walk the recorded
        // euclidean depth: must land back on p.
        const Vec3 dir = normalized(b.forward + b.right * (n->x * half) + b.up * (n->y * half));
        const Vec3 back = v.pos + dir * n->depth;
        CHECK(norm(back - p) <= 1e-6 * std::max(1.0, norm(p)));
    }
}

TEST_CASE("check_view_params enforces the invariants") {
    auto v = view_at({0, 0, 0}, {0, 0, -1}, {0, 1, 0});
    CHECK_FALSE(cam::check_view_params(v).has_value());

    auto bad = v;
    bad.view_dir = {0, 0, -2};
    CHECK(cam::check_view_params(bad).has_value());

    bad = v;
    bad.view_up = {0, 0, -1};
    CHECK(cam::check_view_params(bad).has_value());

    bad = v;
    bad.fov_y_deg = 19.0;
    CHECK(cam::check_view_params(bad).has_value());
    bad.fov_y_deg = 101.0;
    CHECK(cam::check_view_params(bad).has_value());
    bad.fov_y_deg = cam::kMinFovDeg;
    CHECK_FALSE(cam::check_view_params(bad).has_value());
}

TEST_CASE("check_multiview wants k distinct ids") {
    const auto v1 = view_at({0, 0, 0}, {0, 0, -1}, {0, 1, 0});
    auto v2 = v1;
    v2.view_id = 2;
    cam::MultiView mv{{v1, v2}};
    CHECK_FALSE(cam::check_multiview(mv, 2).has_value());
    CHECK(cam::check_multiview(mv, 3).has_value());  // wrong k

    auto dup = mv;
    dup.views[1].view_id = v1.view_id;
    CHECK(cam::check_multiview(dup, 2).has_value());
}
