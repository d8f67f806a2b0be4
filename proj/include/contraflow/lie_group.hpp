/*
 Copyright 2026 The Contraflow Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <array>

#include "contraflow/linalg.hpp"

namespace contraflow::lie {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Scalar-first unit quaternion (w, x, y, z).
struct UnitQuat {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const;
    /// Flips the sign so that w >= 0 (both signs encode the same rotation).
    UnitQuat canonical() const;
    Mat3 to_rotation() const;
};

inline constexpr double kSeriesThreshold = 1e-8;
inline constexpr double kLogGuard = 1e-5;
/// Bound on |tanh(.)| inside pi_ball_layer.
inline constexpr double kBallSquash = 1.0 - 1e-12;

/// [r]_x, the skew-symmetric matrix of r.
Mat3 hat(const Vec3& r);
Vec3 vee(const Mat3& s);

/// Rodrigues formula; requires ||r|| < pi (first cover).
Mat3 so3_exp(const Vec3& r);
/// Inverse of so3_exp on the first cover; rotations within 1e-6 of pi are rejected.
Vec3 so3_log(const Mat3& rot);

UnitQuat quat_exp(const Vec3& v);
Vec3 quat_log(const UnitQuat& q);

/// True when R^T R = I and det R = 1, both within `tol`.
bool is_rotation(const Mat3& rot, double tol = 1e-9);

/// b(x) = (||x||_inf / ||x||_2) x: maps the [-1, 1]^D box onto the unit ball.
Vec box_to_ball(const Vec& x);
Vec ball_to_box(const Vec& y);

/// pi * b(tanh(inner)); output norm is strictly below pi.
Vec pi_ball_layer(const Vec& inner);
/// Inverse of pi_ball_layer for ||y|| < pi.
Vec pi_ball_layer_inverse(const Vec& y);

}  // namespace contraflow::lie
