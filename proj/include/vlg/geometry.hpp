#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vlg/common.hpp"

namespace vlg {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) {
    const double n = norm(a);
    return n > 0 ? (1.0 / n) * a : a;
}

// Row-major 3x3.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double operator()(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }
    double& operator()(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }
};

// Row-major 4x4 rigid transform.
struct Mat4 {
    std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    double operator()(int r, int c) const { return m[static_cast<std::size_t>(4 * r + c)]; }
    double& operator()(int r, int c) { return m[static_cast<std::size_t>(4 * r + c)]; }

    Vec3 transform_point(Vec3 p) const {
        return {(*this)(0, 0) * p.x + (*this)(0, 1) * p.y + (*this)(0, 2) * p.z + (*this)(0, 3),
                (*this)(1, 0) * p.x + (*this)(1, 1) * p.y + (*this)(1, 2) * p.z + (*this)(1, 3),
                (*this)(2, 0) * p.x + (*this)(2, 1) * p.y + (*this)(2, 2) * p.z + (*this)(2, 3)};
    }

    Vec3 rotate(Vec3 v) const {
        return {(*this)(0, 0) * v.x + (*this)(0, 1) * v.y + (*this)(0, 2) * v.z,
                (*this)(1, 0) * v.x + (*this)(1, 1) * v.y + (*this)(1, 2) * v.z,
                (*this)(2, 0) * v.x + (*this)(2, 1) * v.y + (*this)(2, 2) * v.z};
    }
};

Mat4 mat4_mul(const Mat4& a, const Mat4& b);
// Inverse of a rigid transform (R | t): (R^T | -R^T t).
Mat4 rigid_inverse(const Mat4& a);
// Max abs deviation of R^T R from identity over the rotation block.
double rotation_orthonormality_error(const Mat4& world_to_camera);
double rotation_determinant(const Mat4& world_to_camera);

struct CameraPose {
    Mat3 intrinsics;       // fx 0 cx / 0 fy cy / 0 0 1
    Mat4 world_to_camera;  // rigid
    int width = 0;
    int height = 0;

    double fx() const { return intrinsics(0, 0); }
    double fy() const { return intrinsics(1, 1); }
    double cx() const { return intrinsics(0, 2); }
    double cy() const { return intrinsics(1, 2); }

    void validate() const;  // throws ConfigError
};

struct Projection {
    double u = 0;
    double v = 0;
    double depth = 0;  // camera-frame z, meters
    bool visible = false;
};

// Pixel (u,v) is in frame iff 0 <= lround(u) <= width-1 and same for v.
bool pixel_in_frame(double u, double v, int width, int height);

Projection project_point(const Vec3& p_world, const CameraPose& cam);

// Depth-map lookup at the rounded pixel. Accepts a point iff the stored depth
// is positive and within tau of the projected depth. A non-finite tau disables
// the check entirely. depth may be null (no map supplied) which also skips it.
bool occlusion_check(const Projection& proj, const float* depth, int height, int width,
                     double tau);

struct ViewHit {
    int view = 0;
    double u = 0;
    double v = 0;
};

// Forward declaration; full definition in scene.hpp.
struct View;

// Views where the point projects in frame and passes the occlusion check,
// ascending by view index.
std::vector<ViewHit> visible_views(const Vec3& p_world, const std::vector<View>& views,
                                   double tau);

}  // namespace vlg
