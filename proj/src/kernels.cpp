#include "ssmnet/kernels.hpp"

#include <algorithm>
#include <cstring>

namespace ssmnet::kernels {
namespace {

constexpr int kRowBlock = 4;
constexpr int kColBlock = 512;

// C rows [i0, i0+rows) += sum_k A(i, k) * B[k, :], with A(i, k) = A[i*ars + k*acs].
template <typename T>
void row_block(int rows, int N, int K, const T* A, std::size_t ars, std::size_t acs, const T* B, T* C) {
  for (int j0 = 0; j0 < N; j0 += kColBlock) {
    const int n = std::min(kColBlock, N - j0);
    if (rows == kRowBlock) {
      T* __restrict c0 = C + j0;
      T* __restrict c1 = C + N + j0;
      T* __restrict c2 = C + 2 * std::size_t(N) + j0;
      T* __restrict c3 = C + 3 * std::size_t(N) + j0;
      for (int k = 0; k < K; ++k) {
        const T* __restrict b = B + std::size_t(k) * N + j0;
        const T a0 = A[0 * ars + k * acs];
        const T a1 = A[1 * ars + k * acs];
        const T a2 = A[2 * ars + k * acs];
        const T a3 = A[3 * ars + k * acs];
        for (int j = 0; j < n; ++j) {
          const T bj = b[j];
          c0[j] += a0 * bj;
          c1[j] += a1 * bj;
          c2[j] += a2 * bj;
          c3[j] += a3 * bj;
        }
      }
    } else {
      for (int r = 0; r < rows; ++r) {
        T* __restrict c = C + std::size_t(r) * N + j0;
        for (int k = 0; k < K; ++k) {
          const T* __restrict b = B + std::size_t(k) * N + j0;
          const T a = A[r * ars + k * acs];
          for (int j = 0; j < n; ++j) c[j] += a * b[j];
        }
      }
    }
  }
}

template <typename T>
void gemm_strided(int M, int N, int K, const T* A, std::size_t ars, std::size_t acs, const T* B, T* C,
                  bool accumulate) {
  const int blocks = (M + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int i0 = blk * kRowBlock;
    const int rows = std::min(kRowBlock, M - i0);
    T* c = C + std::size_t(i0) * N;
    if (!accumulate) std::fill(c, c + std::size_t(rows) * N, T(0));
    row_block(rows, N, K, A + i0 * ars, ars, acs, B, c);
  }
}

}  // namespace

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t L = 16;
  T acc[L] = {};
  std::size_t j = 0;
  for (; j + L <= n; j += L) {
    for (std::size_t l = 0; l < L; ++l) acc[l] += a[j + l] * b[j + l];
  }
  T tail = 0;
  for (; j < n; ++j) tail += a[j] * b[j];
  for (std::size_t w = L / 2; w > 0; w /= 2) {
    for (std::size_t l = 0; l < w; ++l) acc[l] += acc[l + w];
  }
  return acc[0] + tail;
}

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  gemm_strided(M, N, K, A, std::size_t(K), std::size_t(1), B, C, accumulate);
}

template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  // Output row k reads column k of A (stride K); the reduction runs over M.
  gemm_strided(K, N, M, A, std::size_t(1), std::size_t(K), B, C, accumulate);
}

template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < M; ++i) {
    const T* a = A + std::size_t(i) * N;
    T* c = C + std::size_t(i) * K;
    for (int k = 0; k < K; ++k) {
      const T v = dot(a, B + std::size_t(k) * N, std::size_t(N));
      c[k] = accumulate ? c[k] + v : v;
    }
  }
}

template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* col) {
  const int H = g.height, W = g.width;
  const int rows = static_cast<int>(g.col_rows());
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int dx = r % g.kernel_w;
    const int dy = (r / g.kernel_w) % g.kernel_h;
    const int c = r / (g.kernel_w * g.kernel_h);
    const int oy = dy - g.pad_top();
    const int ox = dx - g.pad_left();
    T* out = col + std::size_t(r) * H * W;
    const T* plane = input + std::size_t(c) * H * W;
    for (int y = 0; y < H; ++y) {
      const int iy = y + oy;
      T* orow = out + std::size_t(y) * W;
      if (iy < 0 || iy >= H) {
        std::fill(orow, orow + W, T(0));
        continue;
      }
      const T* irow = plane + std::size_t(iy) * W;
      for (int x = 0; x < W; ++x) {
        const int ix = x + ox;
        orow[x] = (ix >= 0 && ix < W) ? irow[ix] : T(0);
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* grad_col, T* grad_input, bool accumulate) {
  const int H = g.height, W = g.width;
  const int taps = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    T* plane = grad_input + std::size_t(c) * H * W;
    if (!accumulate) std::fill(plane, plane + std::size_t(H) * W, T(0));
    for (int t = 0; t < taps; ++t) {
      const int dy = t / g.kernel_w;
      const int dx = t % g.kernel_w;
      const int oy = dy - g.pad_top();
      const int ox = dx - g.pad_left();
      const T* src = grad_col + (std::size_t(c) * taps + t) * H * W;
      for (int y = 0; y < H; ++y) {
        const int iy = y + oy;
        if (iy < 0 || iy >= H) continue;
        const T* srow = src + std::size_t(y) * W;
        T* drow = plane + std::size_t(iy) * W;
        const int x_lo = std::max(0, -ox);
        const int x_hi = std::min(W, W - ox);
        for (int x = x_lo; x < x_hi; ++x) drow[x + ox] += srow[x];
      }
    }
  }
}

#define SSMNET_INSTANTIATE(T)                                                        \
  template T dot<T>(const T*, const T*, std::size_t);                                \
  template void gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);             \
  template void gemm_tn<T>(int, int, int, const T*, const T*, T*, bool);             \
  template void gemm_nt<T>(int, int, int, const T*, const T*, T*, bool);             \
  template void im2col<T>(const ConvGeometry&, const T*, T*);                        \
  template void col2im<T>(const ConvGeometry&, const T*, T*, bool);

SSMNET_INSTANTIATE(float)
SSMNET_INSTANTIATE(double)

#undef SSMNET_INSTANTIATE

}  // namespace ssmnet::kernels
