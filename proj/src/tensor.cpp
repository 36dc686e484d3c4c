// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/tensor.hpp"

#include "ltrsum/errors.hpp"

namespace ltrsum {

void matmul_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw ShapeError("matmul: incompatible shapes");
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    double* crow = c.row_ptr(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

void matmul_nt_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    throw ShapeError("matmul_nt: incompatible shapes");
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    double* crow = c.row_ptr(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* brow = b.row_ptr(j);
      double sum = 0.0;
      for (int k = 0; k < a.cols; ++k) sum += arow[k] * brow[k];
      crow[j] += sum;
    }
  }
}

void matmul_tn_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw ShapeError("matmul_tn: incompatible shapes");
  for (int k = 0; k < a.rows; ++k) {
    const double* arow = a.row_ptr(k);
    const double* brow = b.row_ptr(k);
    for (int i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = c.row_ptr(i);
      for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

}  // namespace ltrsum
