#pragma once

// Pinhole camera model and ray/projection primitives.
//
// Conventions: camera-to-world poses, right-handed frames, camera looks along
// -Z with y up (the NeRF-synthetic convention). "Depth" always means planar
// z-depth along the optical axis, not Euclidean distance along the ray.

#include <optional>

#include "nrdf/core.hpp"

namespace nrdf {

struct CameraIntrinsics {
    double fl_x = 0, fl_y = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate() const {
        if (fl_x <= 0 || fl_y <= 0)
            throw std::domain_error("intrinsics: focal lengths must be positive");
        if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height))
            throw std::domain_error("intrinsics: principal point outside image");
    }
};

struct Pose {
    Mat3 rotation;      // camera-to-world
    Vec3 translation;   // camera position in world units

    void validate(double tol = 1e-6) const {
        Mat3 rtr = rotation.transposed() * rotation;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double expect = (i == j) ? 1.0 : 0.0;
                if (std::abs(rtr.at(i, j) - expect) > tol)
                    throw std::domain_error("pose: rotation not orthonormal");
            }
        if (std::abs(rotation.det() - 1.0) > tol)
            throw std::domain_error("pose: rotation determinant != +1");
    }
};

struct Camera {
    CameraIntrinsics intrinsics;
    Pose pose;
};

struct Ray {
    Vec3 origin;
    Vec3 direction;        // unit
    double t_near = 0, t_far = 0;
    // Multiplier converting planar z-depth to distance along this ray
    // (the norm of the un-normalized camera-frame direction with z = -1).
    double depth_to_t = 1.0;
};

// Camera-frame direction for a pixel, z component fixed at -1.
inline Vec3 pixel_dir_cam(const CameraIntrinsics& in, double px, double py) {
    return {(px - in.cx) / in.fl_x, -(py - in.cy) / in.fl_y, -1.0};
}

inline Ray generate_ray(const Camera& cam, double px, double py,
                        double t_near, double t_far) {
    const auto& in = cam.intrinsics;
    if (px < 0 || px >= in.width || py < 0 || py >= in.height)
        throw std::domain_error("generate_ray: pixel out of bounds");
    Vec3 d_cam = pixel_dir_cam(in, px, py);
    Vec3 d_world = cam.pose.rotation * d_cam;
    Ray r;
    r.origin = cam.pose.translation;
    r.direction = d_world.normalized();
    r.t_near = t_near;
    r.t_far = t_far;
    r.depth_to_t = d_cam.norm();
    return r;
}

struct Projection {
    enum class Status { Ok, Behind, Outside };
    Status status = Status::Behind;
    double u = 0, v = 0, z = 0;  // valid when status != Behind

    bool ok() const { return status == Status::Ok; }
};

inline Projection project(const Camera& cam, const Vec3& point) {
    Vec3 p_cam = cam.pose.rotation.transposed() * (point - cam.pose.translation);
    Projection out;
    if (p_cam.z >= 0) {
        out.status = Projection::Status::Behind;
        return out;
    }
    const auto& in = cam.intrinsics;
    out.z = -p_cam.z;
    out.u = in.cx + in.fl_x * (p_cam.x / -p_cam.z);
    out.v = in.cy - in.fl_y * (p_cam.y / -p_cam.z);
    out.status = (out.u >= 0 && out.u < in.width && out.v >= 0 && out.v < in.height)
                     ? Projection::Status::Ok
                     : Projection::Status::Outside;
    return out;
}

inline Vec3 backproject(const Camera& cam, double px, double py, double depth) {
    if (depth <= 0) throw std::domain_error("backproject: depth must be positive");
    const auto& in = cam.intrinsics;
    if (px < 0 || px >= in.width || py < 0 || py >= in.height)
        throw std::domain_error("backproject: pixel out of bounds");
    Vec3 d_cam = pixel_dir_cam(in, px, py);  // z = -1, so depth scales directly
    return cam.pose.translation + cam.pose.rotation * (d_cam * depth);
}

// Camera-to-world rotation with -Z pointing from `position` toward `target`.
inline Pose look_at(const Vec3& position, const Vec3& target, const Vec3& up) {
    Vec3 z = (position - target).normalized();  // camera +Z points away
    Vec3 x = up.cross(z).normalized();
    Vec3 y = z.cross(x);
    Pose p;
    p.rotation.m = {x.x, y.x, z.x, x.y, y.y, z.y, x.z, y.z, z.z};
    p.translation = position;
    return p;
}

}  // namespace nrdf
