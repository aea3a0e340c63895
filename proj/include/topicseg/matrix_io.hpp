#pragma once

#include <Eigen/Core>
#include <string>

namespace topicseg {

// Dense embedding matrix file: 16-byte header (magic "TSKEMB1\0",
// little-endian u32 row count, u32 column count) followed by row-major
// little-endian f64 payload.
void save_matrix(const Eigen::MatrixXd& m, const std::string& path);
Eigen::MatrixXd load_matrix(const std::string& path);

}  // namespace topicseg
