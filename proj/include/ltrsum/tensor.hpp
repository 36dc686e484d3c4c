// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <vector>

namespace ltrsum {

// Dense row-major matrix of doubles. Double precision keeps the
// finite-difference gradient checks well conditioned.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return data[static_cast<size_t>(r) * cols + c];
  }
  double at(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return data[static_cast<size_t>(r) * cols + c];
  }

  double* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  size_t numel() const { return data.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// c += a * b
void matmul_acc(const Mat& a, const Mat& b, Mat& c);
// c += a * b^T
void matmul_nt_acc(const Mat& a, const Mat& b, Mat& c);
// c += a^T * b
void matmul_tn_acc(const Mat& a, const Mat& b, Mat& c);

}  // namespace ltrsum
