#pragma once

// OpenMP-parallel dense kernels. Every output element is produced by exactly one
// thread with a fixed summation order, so results do not depend on the thread count.
// Serial reference versions live in reference.hpp.

#include <cstddef>

namespace ssmnet::kernels {

// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

// C[K,N] (+)= A[M,K]^T * B[M,N]
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

// C[M,K] (+)= A[M,N] * B[K,N]^T
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

struct ConvGeometry {
  int channels = 0;  // input channels
  int height = 0;
  int width = 0;
  int kernel_h = 0;
  int kernel_w = 0;

  // "same" padding: total kh-1 rows, (kh-1)/2 of them above.
  int pad_top() const { return (kernel_h - 1) / 2; }
  int pad_left() const { return (kernel_w - 1) / 2; }
  std::size_t col_rows() const { return static_cast<std::size_t>(channels) * kernel_h * kernel_w; }
  std::size_t col_cols() const { return static_cast<std::size_t>(height) * width; }
};

// col[(c*kh + dy)*kw + dx][y*W + x] = input[c][y + dy - pad_top][x + dx - pad_left] (zero outside)
template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* col);

// Adjoint of im2col: grad_input (+)= scatter(grad_col).
template <typename T>
void col2im(const ConvGeometry& g, const T* grad_col, T* grad_input, bool accumulate);

// Fixed-order lane-split dot product (vectorizes without reassociation flags).
template <typename T>
T dot(const T* a, const T* b, std::size_t n);

}  // namespace ssmnet::kernels
