#include "ssmnet/reference.hpp"

namespace ssmnet::reference {

template <typename T>
void gemm(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      T s = 0;
      for (int k = 0; k < K; ++k) s += A[std::size_t(i) * K + k] * B[std::size_t(k) * N + j];
      C[std::size_t(i) * N + j] = s;
    }
  }
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int pt = (kh - 1) / 2, pl = (kw - 1) / 2;
  Tensor<T> y(Shape{cout, H, W});
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < H; ++oy) {
      for (int ox = 0; ox < W; ++ox) {
        T s = b[co];
        for (int ci = 0; ci < cin; ++ci) {
          for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
              const int iy = oy + dy - pt, ix = ox + dx - pl;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              s += w[((std::size_t(co) * cin + ci) * kh + dy) * kw + dx] * x.at(ci, iy, ix);
            }
          }
        }
        y.at(co, oy, ox) = s;
      }
    }
  }
  return y;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& g) {
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int pt = (kh - 1) / 2, pl = (kw - 1) / 2;
  Conv2dGrads<T> out{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>(Shape{cout})};
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < H; ++oy) {
      for (int ox = 0; ox < W; ++ox) {
        const T go = g.at(co, oy, ox);
        out.bias[co] += go;
        for (int ci = 0; ci < cin; ++ci) {
          for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
              const int iy = oy + dy - pt, ix = ox + dx - pl;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              const std::size_t wi = ((std::size_t(co) * cin + ci) * kh + dy) * kw + dx;
              out.weight[wi] += go * x.at(ci, iy, ix);
              out.input.at(ci, iy, ix) += go * w[wi];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Matrix<double> similarity(const Matrix<T>& e) {
  const std::size_t n = e.rows();
  Matrix<double> s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < e.cols(); ++k) {
        const double d = double(e(i, k)) - double(e(j, k));
        d2 += d * d;
      }
      s(i, j) = 1.0 - 0.25 * d2;
    }
  }
  return s;
}

template void gemm<float>(int, int, int, const float*, const float*, float*);
template void gemm<double>(int, int, int, const double*, const double*, double*);
template Tensor<float> conv2d_forward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> conv2d_forward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template Conv2dGrads<float> conv2d_backward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Conv2dGrads<double> conv2d_backward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template Matrix<double> similarity(const Matrix<float>&);
template Matrix<double> similarity(const Matrix<double>&);

}  // namespace ssmnet::reference
