#include "ssmnet/gradchecks.hpp"

#include <algorithm>
#include <random>

#include "ssmnet/encoder.hpp"
#include "ssmnet/frontend.hpp"
#include "ssmnet/loss.hpp"
#include "ssmnet/objective.hpp"
#include "ssmnet/ssm.hpp"

namespace ssmnet {
namespace {

using Var = Tape<double>::Var;
using Build = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

std::vector<double> uniform(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Checks d/dx of sum(r * op(inputs)) for a fixed random r, over all inputs jointly.
GradcheckReport check_op(const std::vector<Shape>& shapes, const std::vector<double>& start, const Build& build,
                         std::mt19937_64& rng, const GradcheckOptions& options) {
  std::vector<double> weights;
  auto run = [&](std::span<const double> x, bool grad, std::vector<double>* out_grad) {
    Tape<double> tape;
    std::vector<Var> leaves;
    std::size_t off = 0;
    for (const auto& s : shapes) {
      std::vector<double> vals(x.begin() + off, x.begin() + off + s.numel());
      leaves.push_back(tape.input(Tensor<double>(s, std::move(vals))));
      off += s.numel();
    }
    const Var out = build(tape, leaves);
    const auto& y = tape.value(out);
    if (weights.empty()) weights = uniform(y.size(), -1.0, 1.0, rng);
    double f = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) f += weights[i] * y[i];
    if (grad) {
      tape.backward(out, Tensor<double>(y.shape(), weights));
      out_grad->clear();
      for (const auto& leaf : leaves) {
        const auto& g = tape.grad(leaf);
        if (g.empty()) {
          out_grad->insert(out_grad->end(), tape.value(leaf).size(), 0.0);
        } else {
          out_grad->insert(out_grad->end(), g.values().begin(), g.values().end());
        }
      }
    }
    return f;
  };
  auto f = [&](std::span<const double> x) { return run(x, false, nullptr); };
  auto g = [&](std::span<const double> x) {
    std::vector<double> out;
    run(x, true, &out);
    return out;
  };
  return gradcheck(f, g, start, options);
}

std::vector<double> concat(std::initializer_list<std::vector<double>> parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

Matrix<double> random_unit_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix<double> e(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (auto& v : e.row(i)) {
      v = nd(rng);
      ss += v * v;
    }
    for (auto& v : e.row(i)) v /= std::sqrt(ss);
  }
  return e;
}

BinarySSM random_truth(std::size_t n, std::mt19937_64& rng) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = int(i % 2);  // both classes present
  for (std::size_t i = n; i > 1; --i) std::swap(labels[i - 1], labels[rng() % i]);
  BinarySSM s;
  s.values = Matrix<std::uint8_t>(n, n);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) ones += s.values(i, j) = labels[i] == labels[j];
  s.lambda_raw = double(ones) / double(n * n);
  s.lambda = std::clamp(s.lambda_raw, kLambdaMin, kLambdaMax);
  return s;
}

}  // namespace

std::vector<NamedGradcheck> primitive_gradchecks(std::uint64_t seed, const GradcheckOptions& options) {
  std::mt19937_64 rng(seed);
  std::vector<NamedGradcheck> out;

  {
    const Shape xs{2, 7, 6}, ws{3, 2, 6, 4}, bs{3};
    auto start = concat({uniform(xs.numel(), -1, 1, rng), uniform(ws.numel(), -0.5, 0.5, rng),
                         uniform(bs.numel(), -0.1, 0.1, rng)});
    out.push_back({"conv2d", check_op({xs, ws, bs}, start,
                                      [](Tape<double>& t, const std::vector<Var>& v) { return t.conv2d(v[0], v[1], v[2]); },
                                      rng, options)});
  }
  {
    const Shape xs{3, 4, 5};
    out.push_back({"selu", check_op({xs}, uniform(xs.numel(), -3, 3, rng),
                                    [](Tape<double>& t, const std::vector<Var>& v) { return t.selu(v[0]); }, rng,
                                    options)});
  }
  {
    const Shape xs{4, 3, 5}, cs{4};
    auto start = concat({uniform(xs.numel(), -2, 2, rng), uniform(4, 0.5, 1.5, rng), uniform(4, -0.5, 0.5, rng)});
    out.push_back({"group_norm", check_op({xs, cs, cs}, start,
                                          [](Tape<double>& t, const std::vector<Var>& v) {
                                            return t.group_norm(v[0], v[1], v[2], 2);
                                          },
                                          rng, options)});
  }
  {
    const Shape xs{2, 6, 8};
    out.push_back({"max_pool2d", check_op({xs}, uniform(xs.numel(), -1, 1, rng),
                                          [](Tape<double>& t, const std::vector<Var>& v) {
                                            return t.max_pool2d(v[0], 3, 4);
                                          },
                                          rng, options)});
  }
  {
    const Shape xs{10}, ws{4, 10}, bs{4};
    auto start = concat({uniform(10, -1, 1, rng), uniform(40, -0.5, 0.5, rng), uniform(4, -0.1, 0.1, rng)});
    out.push_back({"linear", check_op({xs, ws, bs}, start,
                                      [](Tape<double>& t, const std::vector<Var>& v) { return t.linear(v[0], v[1], v[2]); },
                                      rng, options)});
  }
  {
    const Shape xs{8};
    out.push_back({"l2_normalize", check_op({xs}, uniform(8, -1, 1, rng),
                                            [](Tape<double>& t, const std::vector<Var>& v) {
                                              return t.l2_normalize(v[0]);
                                            },
                                            rng, options)});
  }
  {
    const std::size_t n = 5, d = 6;
    const Matrix<double> e0 = random_unit_rows(n, d, rng);
    Matrix<double> r(n, n);
    for (auto& v : r.storage()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    auto f = [&](std::span<const double> x) {
      const auto s = similarity_matrix(Matrix<double>(n, d, std::vector<double>(x.begin(), x.end())));
      double acc = 0.0;
      for (std::size_t k = 0; k < r.size(); ++k) acc += r.storage()[k] * s.values.storage()[k];
      return acc;
    };
    auto g = [&](std::span<const double> x) {
      return similarity_backward(Matrix<double>(n, d, std::vector<double>(x.begin(), x.end())), r).storage();
    };
    out.push_back({"similarity", gradcheck(f, g, e0.storage(), options)});
  }
  {
    const std::size_t n = 6;
    const BinarySSM truth = random_truth(n, rng);
    const auto start = uniform(n * n, 0.05, 0.95, rng);
    const LossConfig cfg;
    auto f = [&](std::span<const double> x) {
      return weighted_bce(SimilarityMatrix{Matrix<double>(n, n, std::vector<double>(x.begin(), x.end()))}, truth, cfg)
          .total;
    };
    auto g = [&](std::span<const double> x) {
      return weighted_bce_grad(SimilarityMatrix{Matrix<double>(n, n, std::vector<double>(x.begin(), x.end()))}, truth,
                               cfg)
          .storage();
    };
    out.push_back({"weighted_bce", gradcheck(f, g, start, options)});
  }
  return out;
}

NamedGradcheck composite_gradcheck(std::size_t T, std::uint64_t seed, std::size_t coords_per_tensor,
                                   const GradcheckOptions& options) {
  std::mt19937_64 rng(seed);
  EncoderParams<double> params = init_params(seed).cast<double>();
  // Non-trivial affine and bias values so every parameter shapes the output.
  for (int l = 0; l < 3; ++l) {
    for (auto& v : params.conv_bias[l].storage()) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    for (auto& v : params.norm_gamma[l].storage()) v = std::uniform_real_distribution<double>(0.8, 1.2)(rng);
    for (auto& v : params.norm_beta[l].storage()) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  }
  for (auto& v : params.fc_bias.storage()) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);

  Matrix<double> patches(T * kCqtBins, kPatchCols, uniform(T * kCqtBins * kPatchCols, 0.0, 1.0, rng));
  const BinarySSM truth = random_truth(T, rng);
  const LossConfig cfg{1e-6, LossNormalization::Sum};

  struct Coord {
    std::size_t tensor, index;
  };
  std::vector<Coord> coords;
  {
    const auto tensors = params.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      const std::size_t n = tensors[t]->size();
      // Distinct indices: a repeated entry would be overwritten by its twin when perturbed.
      std::vector<std::size_t> picked;
      while (picked.size() < std::min(coords_per_tensor, n)) {
        const std::size_t k = rng() % n;
        if (std::find(picked.begin(), picked.end(), k) == picked.end()) picked.push_back(k);
      }
      for (std::size_t k : picked) coords.push_back({t, k});
    }
  }
  std::vector<double> x0;
  for (const auto& c : coords) x0.push_back((*params.tensors()[c.tensor])[c.index]);

  auto with = [&](std::span<const double> x) {
    EncoderParams<double> p = params;
    auto tensors = p.tensors();
    for (std::size_t k = 0; k < coords.size(); ++k) (*tensors[coords[k].tensor])[coords[k].index] = x[k];
    return p;
  };
  auto f = [&](std::span<const double> x) {
    return track_objective<double>(with(x), patches, truth, cfg, nullptr).loss.total;
  };
  auto g = [&](std::span<const double> x) {
    const auto p = with(x);
    auto grad = EncoderParams<double>::zeros(p.plan);
    track_objective<double>(p, patches, truth, cfg, &grad);
    const auto gt = grad.tensors();
    std::vector<double> out;
    for (const auto& c : coords) out.push_back((*gt[c.tensor])[c.index]);
    return out;
  };
  return {"composite", gradcheck(f, g, x0, options)};
}

}  // namespace ssmnet
