#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvopt/geom.hpp"

namespace mvopt::cam {

inline constexpr double kMinFovDeg = 20.0;
inline constexpr double kMaxFovDeg = 100.0;
inline constexpr double kNearEps = 1e-6;  // eye-plane clip distance, meters

// A perspective camera with square aspect: position, unit view direction,
// unit up hint and vertical field of view.
struct ViewParams {
    int view_id = 0;  // id of the viewer entity this camera is anchored to
    Vec3 pos;
    Vec3 view_dir;
    Vec3 view_up;
    double fov_y_deg = 60.0;

    bool operator==(const ViewParams&) const = default;
};

// nullopt when valid, else a description of the broken invariant.
std::optional<std::string> check_view_params(const ViewParams& v);

struct MultiView {
    std::vector<ViewParams> views;

    bool operator==(const MultiView&) const = default;
};

// Checks |views| == k and pairwise-distinct view ids (plus per-view params).
std::optional<std::string> check_multiview(const MultiView& mv, int k);

class DegenerateFrameError : public std::invalid_argument {
public:
    explicit DegenerateFrameError(const std::string& what) : std::invalid_argument(what) {}
};

struct Basis {
    Vec3 right;
    Vec3 up;
    Vec3 forward;
};

// Orthonormal frame from the view parameters: forward = view_dir,
// right = normalize(view_dir x view_up), up = right x forward (the up hint
// is re-orthogonalized). Throws DegenerateFrameError when dir and up are
// parallel.
Basis camera_basis(const ViewParams& v);

struct Ndc {
    double x = 0.0;  // [-1, 1], +x right
    double y = 0.0;  // [-1, 1], +y up
    double depth = 0.0;  // euclidean distance eye -> point, meters
};

// Perspective projection with vertical half-angle fov/2 and aspect 1.
// Absent when the point sits at or behind the eye plane (forward depth
// <= kNearEps) or lands outside the closed [-1,1]^2 square.
std::optional<Ndc> ndc_of_point(const ViewParams& v, const Vec3& p);

// Ray through the center of pixel (px, py) of a width x height image.
// Row 0 is the top of the image. Throws std::out_of_range on a bad pixel.
Ray pixel_ray(const ViewParams& v, int width, int height, int px, int py);

}  // namespace mvopt::cam
