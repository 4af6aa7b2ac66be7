#pragma once

// Serial, loop-for-loop reference implementations. Slow; kept to check the
// parallel kernels and for the benchmark baseline.

#include "ssmnet/tensor.hpp"

namespace ssmnet::reference {

template <typename T>
void gemm(int M, int N, int K, const T* A, const T* B, T* C);

// Direct "same"-padded cross-correlation: x[Cin,H,W], w[Cout,Cin,kh,kw], b[Cout] -> [Cout,H,W].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input, weight, bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out);

// S_ij = 1 - |e_i - e_j|^2 / 4, computed pair by pair.
template <typename T>
Matrix<double> similarity(const Matrix<T>& embeddings);

}  // namespace ssmnet::reference
