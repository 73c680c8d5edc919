#pragma once

#include <Eigen/Core>

namespace nanoflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;

}  // namespace nanoflow
