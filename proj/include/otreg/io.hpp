#pragma once

#include <Eigen/Core>
#include <string>

#include "otreg/geometry.hpp"

namespace otreg {

/// Reads whitespace-separated xyz lines ('#' comments ignored) or ASCII PLY
/// with x,y,z properties. Throws ConfigError on missing/malformed files.
PointCloud read_point_cloud(const std::string& path);

void write_point_cloud(const std::string& path, const PointCloud& cloud);

/// One feature row per line; must have a consistent column count.
Eigen::MatrixXd read_matrix(const std::string& path);

void write_matrix(const std::string& path, const Eigen::MatrixXd& m);

/// 4x4 row-major homogeneous matrix, last row 0 0 0 1.
RigidTransform read_transform(const std::string& path);

void write_transform(const std::string& path, const RigidTransform& tf);

/// "src_index<TAB>tgt_index<TAB>confidence" lines.
CorrespondenceSet read_correspondences(const std::string& path);

void write_correspondences(const std::string& path, const CorrespondenceSet& pairs);

}  // namespace otreg
