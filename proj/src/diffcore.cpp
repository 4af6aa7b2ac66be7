#include "ssmnet/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ssmnet/kernels.hpp"

namespace ssmnet {

template <typename T>
typename Tape<T>::Var Tape<T>::push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
typename Tape<T>::Var Tape<T>::constant(Tensor<T> value) {
  return push(std::move(value), false, nullptr);
}

template <typename T>
typename Tape<T>::Var Tape<T>::input(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
typename Tape<T>::Var Tape<T>::parameter(const Tensor<T>& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.value;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Tensor<T>(value(v).shape());
  return n.grad;
}

template <typename T>
void Tape<T>::reset() {
  nodes_.clear();
  backward_done_ = false;
}

template <typename T>
void Tape<T>::backward(Var out, const Tensor<T>& seed) {
  if (backward_done_) fail(ErrorKind::Config, "tape: backward already ran; reset() before reuse");
  if (seed.shape() != value(out).shape()) {
    fail(ErrorKind::Shape, "tape: seed shape " + seed.shape().str() + " != output " + value(out).shape().str());
  }
  backward_done_ = true;
  if (!nodes_.at(out.id).requires_grad) return;
  auto& g = grad_buffer(out);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

template <typename T>
void Tape<T>::backward(Var scalar_out) {
  if (value(scalar_out).size() != 1) fail(ErrorKind::Shape, "tape: backward() without seed needs a scalar output");
  backward(scalar_out, Tensor<T>(value(scalar_out).shape(), T(1)));
}

template <typename T>
typename Tape<T>::Var Tape<T>::conv2d(Var xv, Var wv, Var bv) {
  const auto& x = value(xv);
  const auto& w = value(wv);
  const auto& b = value(bv);
  if (x.shape().rank() != 3 || w.shape().rank() != 4 || b.shape().rank() != 1) {
    fail(ErrorKind::Shape, "conv2d: expected x[C,H,W], w[O,C,kh,kw], b[O]");
  }
  if (w.dim(1) != x.dim(0)) {
    fail(ErrorKind::Shape, "conv2d: kernel expects " + std::to_string(w.dim(1)) + " input channels, got " +
                               std::to_string(x.dim(0)));
  }
  if (b.dim(0) != w.dim(0)) fail(ErrorKind::Shape, "conv2d: bias length != output channels");

  const kernels::ConvGeometry geo{x.dim(0), x.dim(1), x.dim(2), w.dim(2), w.dim(3)};
  const int cout = w.dim(0);
  const int K = static_cast<int>(geo.col_rows());
  const int N = static_cast<int>(geo.col_cols());

  std::vector<T> col(geo.col_rows() * geo.col_cols());
  kernels::im2col(geo, x.data(), col.data());

  Tensor<T> y(Shape{cout, geo.height, geo.width});
  kernels::gemm_nn(cout, N, K, w.data(), col.data(), y.data(), false);
  for (int co = 0; co < cout; ++co) {
    T* row = y.data() + std::size_t(co) * N;
    const T bias = b[co];
    for (int j = 0; j < N; ++j) row[j] += bias;
  }

  const bool need = requires_grad(xv) || requires_grad(wv) || requires_grad(bv);
  if (!need) col.clear();
  return push(std::move(y), need,
              [xv, wv, bv, geo, cout, K, N, col = std::move(col)](Tape& t, const Tensor<T>& g) {
                if (t.requires_grad(bv)) {
                  auto& gb = t.grad_buffer(bv);
                  for (int co = 0; co < cout; ++co) {
                    const T* row = g.data() + std::size_t(co) * N;
                    T s = 0;
                    for (int j = 0; j < N; ++j) s += row[j];
                    gb[co] += s;
                  }
                }
                if (t.requires_grad(wv)) {
                  kernels::gemm_nt(cout, N, K, g.data(), col.data(), t.grad_buffer(wv).data(), true);
                }
                if (t.requires_grad(xv)) {
                  std::vector<T> gcol(std::size_t(K) * N);
                  kernels::gemm_tn(cout, N, K, t.value(wv).data(), g.data(), gcol.data(), false);
                  kernels::col2im(geo, gcol.data(), t.grad_buffer(xv).data(), true);
                }
              });
}

template <typename T>
typename Tape<T>::Var Tape<T>::selu(Var xv) {
  const auto& x = value(xv);
  Tensor<T> y(x.shape());
  const T scale = T(kSeluScale), sa = T(kSeluScale * kSeluAlpha);
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] > T(0) ? scale * x[i] : sa * (std::exp(x[i]) - T(1));
  }
  return push(std::move(y), requires_grad(xv), [xv, scale, sa](Tape& t, const Tensor<T>& g) {
    const auto& x = t.value(xv);
    auto& gx = t.grad_buffer(xv);
    for (std::size_t i = 0; i < x.size(); ++i) {
      gx[i] += g[i] * (x[i] > T(0) ? scale : sa * std::exp(x[i]));
    }
  });
}

template <typename T>
typename Tape<T>::Var Tape<T>::group_norm(Var xv, Var gv, Var bv, int groups) {
  const auto& x = value(xv);
  const auto& gamma = value(gv);
  const auto& beta = value(bv);
  if (x.shape().rank() != 3) fail(ErrorKind::Shape, "group_norm: expected x[C,H,W]");
  const int C = x.dim(0);
  if (groups <= 0 || C % groups != 0) {
    fail(ErrorKind::Config, "group_norm: " + std::to_string(groups) + " groups do not divide " + std::to_string(C) +
                                " channels");
  }
  if (int(gamma.size()) != C || int(beta.size()) != C) fail(ErrorKind::Shape, "group_norm: affine size != channels");

  const std::size_t hw = std::size_t(x.dim(1)) * x.dim(2);
  const std::size_t per_group = std::size_t(C / groups) * hw;
  Tensor<T> xhat(x.shape());
  Tensor<T> y(x.shape());
  std::vector<T> rstd(groups);

#pragma omp parallel for schedule(static)
  for (int g = 0; g < groups; ++g) {
    const T* src = x.data() + g * per_group;
    T mean = 0;
    for (std::size_t i = 0; i < per_group; ++i) mean += src[i];
    mean /= T(per_group);
    T var = 0;
    for (std::size_t i = 0; i < per_group; ++i) {
      const T d = src[i] - mean;
      var += d * d;
    }
    var /= T(per_group);
    const T r = T(1) / std::sqrt(var + T(kGroupNormEps));
    rstd[g] = r;
    const int c0 = g * (C / groups);
    for (int c = c0; c < c0 + C / groups; ++c) {
      const T* xs = x.data() + c * hw;
      T* xh = xhat.data() + c * hw;
      T* dst = y.data() + c * hw;
      const T gc = gamma[c], bc = beta[c];
      for (std::size_t i = 0; i < hw; ++i) {
        xh[i] = (xs[i] - mean) * r;
        dst[i] = gc * xh[i] + bc;
      }
    }
  }

  const bool need = requires_grad(xv) || requires_grad(gv) || requires_grad(bv);
  return push(std::move(y), need,
              [xv, gv, bv, groups, hw, per_group, C, xhat = std::move(xhat), rstd = std::move(rstd)](
                  Tape& t, const Tensor<T>& g) {
                const auto& gamma = t.value(gv);
                if (t.requires_grad(gv) || t.requires_grad(bv)) {
                  std::vector<T> dg(C, T(0)), db(C, T(0));
                  for (int c = 0; c < C; ++c) {
                    const T* gy = g.data() + c * hw;
                    const T* xh = xhat.data() + c * hw;
                    T sg = 0, sb = 0;
                    for (std::size_t i = 0; i < hw; ++i) {
                      sg += gy[i] * xh[i];
                      sb += gy[i];
                    }
                    dg[c] = sg;
                    db[c] = sb;
                  }
                  if (t.requires_grad(gv)) {
                    auto& G = t.grad_buffer(gv);
                    for (int c = 0; c < C; ++c) G[c] += dg[c];
                  }
                  if (t.requires_grad(bv)) {
                    auto& B = t.grad_buffer(bv);
                    for (int c = 0; c < C; ++c) B[c] += db[c];
                  }
                }
                if (!t.requires_grad(xv)) return;
                auto& gx = t.grad_buffer(xv);
#pragma omp parallel for schedule(static)
                for (int grp = 0; grp < groups; ++grp) {
                  const int per = C / groups;
                  T s1 = 0, s2 = 0;
                  for (int c = grp * per; c < (grp + 1) * per; ++c) {
                    const T gc = gamma[c];
                    const T* gy = g.data() + c * hw;
                    const T* xh = xhat.data() + c * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                      const T d = gy[i] * gc;
                      s1 += d;
                      s2 += d * xh[i];
                    }
                  }
                  const T n = T(per_group);
                  const T m1 = s1 / n, m2 = s2 / n;
                  const T r = rstd[grp];
                  for (int c = grp * per; c < (grp + 1) * per; ++c) {
                    const T gc = gamma[c];
                    const T* gy = g.data() + c * hw;
                    const T* xh = xhat.data() + c * hw;
                    T* dx = gx.data() + c * hw;
                    for (std::size_t i = 0; i < hw; ++i) dx[i] += r * (gy[i] * gc - m1 - xh[i] * m2);
                  }
                }
              });
}

template <typename T>
typename Tape<T>::Var Tape<T>::max_pool2d(Var xv, int kh, int kw) {
  const auto& x = value(xv);
  if (x.shape().rank() != 3) fail(ErrorKind::Shape, "max_pool2d: expected x[C,H,W]");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (kh <= 0 || kw <= 0 || kh > H || kw > W) {
    fail(ErrorKind::Shape, "max_pool2d: kernel (" + std::to_string(kh) + "," + std::to_string(kw) +
                               ") does not fit input " + x.shape().str());
  }
  const int OH = H / kh, OW = W / kw;
  Tensor<T> y(Shape{C, OH, OW});
  std::vector<std::size_t> argmax(y.size());

#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        std::size_t best = (std::size_t(c) * H + oy * kh) * W + ox * kw;
        T best_v = x[best];
        for (int dy = 0; dy < kh; ++dy) {
          for (int dx = 0; dx < kw; ++dx) {
            const std::size_t idx = (std::size_t(c) * H + oy * kh + dy) * W + ox * kw + dx;
            if (x[idx] > best_v) {
              best_v = x[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (std::size_t(c) * OH + oy) * OW + ox;
        y[o] = best_v;
        argmax[o] = best;
      }
    }
  }
  return push(std::move(y), requires_grad(xv), [xv, argmax = std::move(argmax)](Tape& t, const Tensor<T>& g) {
    auto& gx = t.grad_buffer(xv);
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
  });
}

template <typename T>
typename Tape<T>::Var Tape<T>::flatten(Var xv) {
  Tensor<T> y = value(xv);
  y.reshape(Shape{static_cast<int>(y.size())});
  return push(std::move(y), requires_grad(xv), [xv](Tape& t, const Tensor<T>& g) {
    auto& gx = t.grad_buffer(xv);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
typename Tape<T>::Var Tape<T>::linear(Var xv, Var wv, Var bv) {
  const auto& x = value(xv);
  const auto& w = value(wv);
  const auto& b = value(bv);
  if (x.shape().rank() != 1 || w.shape().rank() != 2 || w.dim(1) != x.dim(0) || b.size() != std::size_t(w.dim(0))) {
    fail(ErrorKind::Shape, "linear: x" + x.shape().str() + " w" + w.shape().str() + " b" + b.shape().str());
  }
  const int m = w.dim(0), n = w.dim(1);
  Tensor<T> y(Shape{m});
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) y[i] = kernels::dot(w.data() + std::size_t(i) * n, x.data(), n) + b[i];

  const bool need = requires_grad(xv) || requires_grad(wv) || requires_grad(bv);
  return push(std::move(y), need, [xv, wv, bv, m, n](Tape& t, const Tensor<T>& g) {
    if (t.requires_grad(bv)) {
      auto& gb = t.grad_buffer(bv);
      for (int i = 0; i < m; ++i) gb[i] += g[i];
    }
    if (t.requires_grad(wv)) {
      const auto& x = t.value(xv);
      auto& gw = t.grad_buffer(wv);
      for (int i = 0; i < m; ++i) {
        T* row = gw.data() + std::size_t(i) * n;
        for (int j = 0; j < n; ++j) row[j] += g[i] * x[j];
      }
    }
    if (t.requires_grad(xv)) {
      // gx = W^T g as a 1-row GEMM
      kernels::gemm_tn(m, n, 1, g.data(), t.value(wv).data(), t.grad_buffer(xv).data(), true);
    }
  });
}

template <typename T>
typename Tape<T>::Var Tape<T>::l2_normalize(Var xv) {
  const auto& x = value(xv);
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ss += double(x[i]) * double(x[i]);
  const double norm = std::sqrt(ss);
  if (!(norm >= kNormEps)) fail(ErrorKind::Degenerate, "l2_normalize: vector norm below 1e-12");
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(double(x[i]) / norm);
  const Var yv{static_cast<int>(nodes_.size())};
  return push(std::move(y), requires_grad(xv), [xv, yv, norm](Tape& t, const Tensor<T>& g) {
    const auto& u = t.value(yv);
    double ug = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) ug += double(u[i]) * double(g[i]);
    auto& gx = t.grad_buffer(xv);
    for (std::size_t i = 0; i < u.size(); ++i) gx[i] += T((double(g[i]) - double(u[i]) * ug) / norm);
  });
}

template <typename T>
typename Tape<T>::Var Tape<T>::sum(Var xv) {
  const auto& x = value(xv);
  T s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  return push(Tensor<T>(Shape{1}, s), requires_grad(xv), [xv](Tape& t, const Tensor<T>& g) {
    auto& gx = t.grad_buffer(xv);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

template class Tape<float>;
template class Tape<double>;

GradcheckReport gradcheck(const ScalarFn& f, const GradientFn& grad, std::vector<double> x,
                          const GradcheckOptions& options) {
  GradcheckReport report;
  const std::vector<double> analytic = grad(x);
  if (analytic.size() != x.size()) fail(ErrorKind::Shape, "gradcheck: gradient size != input size");

  std::vector<std::size_t> coords = options.coordinates;
  if (coords.empty()) {
    coords.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) coords[i] = i;
  }

  auto central = [&](std::size_t i, double h) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    return (fp - fm) / (2.0 * h);
  };

  for (std::size_t i : coords) {
    if (!std::isfinite(analytic[i])) {
      report.finite = false;
      report.max_rel_error = std::numeric_limits<double>::infinity();
      report.worst_coordinate = i;
      continue;
    }
    if (options.skip && options.skip(i)) {
      ++report.skipped;
      continue;
    }
    const double h = options.step * (1.0 + std::abs(x[i]));
    const double numeric = central(i, h);
    if (!std::isfinite(numeric)) {
      report.finite = false;
      report.max_rel_error = std::numeric_limits<double>::infinity();
      report.worst_coordinate = i;
      continue;
    }
    if (options.detect_kinks) {
      const double half = central(i, 0.5 * h);
      const double scale = std::max({std::abs(numeric), std::abs(half), 1e-8});
      if (std::abs(numeric - half) / scale > 0.25 * options.tolerance) {
        ++report.skipped;
        continue;
      }
    }
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic[i] - numeric) / denom;
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_coordinate = i;
    }
  }
  report.passed = report.finite && report.checked > 0 && report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace ssmnet
