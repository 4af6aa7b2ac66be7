#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ssmnet/error.hpp"
#include "ssmnet/tensor.hpp"

namespace ssmnet {

inline constexpr double kSeluScale = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kGroupNormEps = 1e-5;
inline constexpr double kNormEps = 1e-12;

/// Reverse-mode tape over whole tensors.
///
/// Nodes are appended in evaluation order, so replaying them backwards is a
/// valid topological order. A tape supports one backward pass per forward;
/// call reset() before recording again. A tape is not shared across threads.
template <typename T>
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var constant(Tensor<T> value);
  Var input(Tensor<T> value);
  /// Non-owning leaf; `value` must outlive the tape.
  Var parameter(const Tensor<T>& value, bool requires_grad = true);

  const Tensor<T>& value(Var v) const;
  /// Accumulated gradient, or an empty tensor if backward never reached `v`.
  const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// "Same"-padded stride-1 cross-correlation. x[Cin,H,W], w[Cout,Cin,kh,kw], b[Cout].
  Var conv2d(Var x, Var w, Var b);
  Var selu(Var x);
  /// x[C,H,W]; statistics per group over (C/groups) x H x W, then per-channel affine.
  Var group_norm(Var x, Var gamma, Var beta, int groups);
  /// Stride = kernel; trailing rows/cols dropped; ties route gradient to the first maximum.
  Var max_pool2d(Var x, int kh, int kw);
  Var flatten(Var x);
  /// x[n], w[m,n], b[m] -> w x + b
  Var linear(Var x, Var w, Var b);
  Var l2_normalize(Var x);
  /// Sum of all elements (scalar output); mostly for tests.
  Var sum(Var x);

  void backward(Var out, const Tensor<T>& seed);
  void backward(Var scalar_out);

  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn);
  Tensor<T>& grad_buffer(Var v);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

struct GradcheckOptions {
  double tolerance = 1e-4;
  /// Central-difference step is step * (1 + |x_i|).
  double step = 1e-5;
  /// Coordinates to probe; empty means all.
  std::vector<std::size_t> coordinates;
  /// Documented non-smooth points (e.g. max-pool ties) to leave out.
  std::function<bool(std::size_t)> skip;
  /// Compare central differences at h and h/2; coordinates where they disagree
  /// by more than tolerance / 4 straddle a kink and are skipped. Smooth points
  /// agree far more closely; a kink nearer than h/2 shifts the h estimate by
  /// about twice the disagreement.
  bool detect_kinks = true;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool finite = true;
  bool passed = false;
};

using ScalarFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

/// Central differences with step options.step * (1 + |x_i|); error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradcheckReport gradcheck(const ScalarFn& f, const GradientFn& grad, std::vector<double> x,
                          const GradcheckOptions& options = {});

}  // namespace ssmnet
