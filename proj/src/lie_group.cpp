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

#include "contraflow/lie_group.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "contraflow/errors.hpp"

namespace contraflow::lie {

double UnitQuat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

UnitQuat UnitQuat::canonical() const {
    if (w < 0.0) return {-w, -x, -y, -z};
    return *this;
}

Mat3 UnitQuat::to_rotation() const {
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Mat3 hat(const Vec3& r) {
    Mat3 s;
    s << 0.0, -r(2), r(1), r(2), 0.0, -r(0), -r(1), r(0), 0.0;
    return s;
}

Vec3 vee(const Mat3& s) { return Vec3(s(2, 1), s(0, 2), s(1, 0)); }

Mat3 so3_exp(const Vec3& r) {
    const double zeta = r.norm();
    if (!(zeta < M_PI)) {
        throw FirstCoverError("so3_exp: ||r|| = " + std::to_string(zeta) + " is outside the first cover (< pi)");
    }
    const Mat3 k = hat(r);
    if (zeta < kSeriesThreshold) return Mat3::Identity() + k + 0.5 * k * k;
    return Mat3::Identity() + (std::sin(zeta) / zeta) * k + ((1.0 - std::cos(zeta)) / (zeta * zeta)) * k * k;
}

Vec3 so3_log(const Mat3& rot) {
    const double c = std::clamp(0.5 * (rot.trace() - 1.0), -1.0, 1.0);
    const double zeta = std::acos(c);
    if (zeta > M_PI - kLogGuard) {
        throw FirstCoverError("so3_log: rotation angle " + std::to_string(zeta) +
                              " is within 1e-6 of pi where the logarithm is multivalued");
    }
    const Mat3 skew = 0.5 * (rot - rot.transpose());
    if (zeta < kSeriesThreshold) return vee(skew);
    return (zeta / std::sin(zeta)) * vee(skew);
}

UnitQuat quat_exp(const Vec3& v) {
    const double n = v.norm();
    if (!(n < M_PI)) {
        throw FirstCoverError("quat_exp: ||v|| = " + std::to_string(n) + " is outside the first cover (< pi)");
    }
    if (n == 0.0) return {};
    const double s = std::sin(0.5 * n) / n;
    return {std::cos(0.5 * n), s * v(0), s * v(1), s * v(2)};
}

Vec3 quat_log(const UnitQuat& q) {
    if (std::abs(q.norm() - 1.0) > 1e-9) throw ContractViolation("quat_log: quaternion is not unit norm");
    const UnitQuat c = q.canonical();
    const Vec3 vec(c.x, c.y, c.z);
    const double vn = vec.norm();
    if (vn < 1e-12) return Vec3::Zero();
    // atan2 is better conditioned than acos near w = 1.
    const double angle = 2.0 * std::atan2(vn, c.w);
    if (angle > M_PI - kLogGuard) {
        throw FirstCoverError("quat_log: rotation angle " + std::to_string(angle) +
                              " is within 1e-6 of pi where q and -q give different logarithms");
    }
    return (angle / vn) * vec;
}

bool is_rotation(const Mat3& rot, double tol) {
    const double orth = (rot.transpose() * rot - Mat3::Identity()).cwiseAbs().maxCoeff();
    return orth <= tol && std::abs(rot.determinant() - 1.0) <= tol;
}

Vec box_to_ball(const Vec& x) {
    if (x.size() == 0) return x;
    const double inf = x.cwiseAbs().maxCoeff();
    if (inf > 1.0) throw ArgumentError("box_to_ball: input outside the [-1, 1] box");
    if (inf == 0.0) return Vec::Zero(x.size());
    return (inf / x.norm()) * x;
}

Vec ball_to_box(const Vec& y) {
    if (y.size() == 0) return y;
    const double two = y.norm();
    if (two > 1.0 + 1e-12) throw ArgumentError("ball_to_box: input outside the unit ball");
    if (two == 0.0) return Vec::Zero(y.size());
    return (two / y.cwiseAbs().maxCoeff()) * y;
}

Vec pi_ball_layer(const Vec& inner) {
    // tanh saturates to exactly 1 in f64; keep the image inside the open ball.
    const Vec squashed = inner.array().tanh().cwiseMax(-kBallSquash).cwiseMin(kBallSquash).matrix();
    return M_PI * box_to_ball(squashed);
}

Vec pi_ball_layer_inverse(const Vec& y) {
    if (!(y.norm() < M_PI)) throw FirstCoverError("pi_ball_layer_inverse: input outside the open pi-ball");
    const Vec box = ball_to_box(y / M_PI);
    return box.array().atanh().matrix();
}

}  // namespace contraflow::lie
