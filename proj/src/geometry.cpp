#include "vlg/geometry.hpp"

#include "vlg/scene.hpp"

namespace vlg {

Mat4 mat4_mul(const Mat4& a, const Mat4& b) {
    Mat4 out;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            double s = 0;
            for (int k = 0; k < 4; ++k) s += a(r, k) * b(k, c);
            out(r, c) = s;
        }
    return out;
}

Mat4 rigid_inverse(const Mat4& a) {
    Mat4 out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out(r, c) = a(c, r);
    const Vec3 t{a(0, 3), a(1, 3), a(2, 3)};
    out(0, 3) = -(out(0, 0) * t.x + out(0, 1) * t.y + out(0, 2) * t.z);
    out(1, 3) = -(out(1, 0) * t.x + out(1, 1) * t.y + out(1, 2) * t.z);
    out(2, 3) = -(out(2, 0) * t.x + out(2, 1) * t.y + out(2, 2) * t.z);
    out(3, 0) = out(3, 1) = out(3, 2) = 0;
    out(3, 3) = 1;
    return out;
}

double rotation_orthonormality_error(const Mat4& m) {
    double err = 0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double s = 0;
            for (int k = 0; k < 3; ++k) s += m(k, r) * m(k, c);
            err = std::max(err, std::abs(s - (r == c ? 1.0 : 0.0)));
        }
    return err;
}

double rotation_determinant(const Mat4& m) {
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
           m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

void CameraPose::validate() const {
    if (!(fx() > 0) || !(fy() > 0)) throw ConfigError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("camera pixel extents must be positive");
    if (rotation_orthonormality_error(world_to_camera) > 1e-5)
        throw ConfigError("extrinsics rotation block is not orthonormal");
    if (std::abs(rotation_determinant(world_to_camera) - 1.0) > 1e-5)
        throw ConfigError("extrinsics rotation block must have determinant +1");
}

bool pixel_in_frame(double u, double v, int width, int height) {
    const long px = std::lround(u);
    const long py = std::lround(v);
    return px >= 0 && px <= width - 1 && py >= 0 && py <= height - 1;
}

Projection project_point(const Vec3& p_world, const CameraPose& cam) {
    const Vec3 q = cam.world_to_camera.transform_point(p_world);
    Projection proj;
    proj.depth = q.z;
    if (q.z <= 0) return proj;  // behind or on the camera plane
    proj.u = cam.fx() * q.x / q.z + cam.cx();
    proj.v = cam.fy() * q.y / q.z + cam.cy();
    proj.visible = pixel_in_frame(proj.u, proj.v, cam.width, cam.height);
    return proj;
}

bool occlusion_check(const Projection& proj, const float* depth, int height, int width,
                     double tau) {
    if (depth == nullptr || !std::isfinite(tau)) return true;
    const long px = std::lround(proj.u);
    const long py = std::lround(proj.v);
    if (px < 0 || px > width - 1 || py < 0 || py > height - 1) return false;
    const float stored = depth[py * width + px];
    if (!(stored > 0)) return false;  // invalid sensor reading
    return std::abs(proj.depth - static_cast<double>(stored)) <= tau;
}

std::vector<ViewHit> visible_views(const Vec3& p_world, const std::vector<View>& views,
                                   double tau) {
    std::vector<ViewHit> hits;
    for (int t = 0; t < static_cast<int>(views.size()); ++t) {
        const View& view = views[static_cast<std::size_t>(t)];
        const Projection proj = project_point(p_world, view.pose);
        if (!proj.visible) continue;
        const float* depth = view.has_depth() ? view.depth.data() : nullptr;
        if (!occlusion_check(proj, depth, view.pose.height, view.pose.width, tau)) continue;
        hits.push_back({t, proj.u, proj.v});
    }
    return hits;
}

}  // namespace vlg
