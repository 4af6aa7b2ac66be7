#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmnet/diffcore.hpp"

namespace ssmnet {

struct NamedGradcheck {
  std::string name;
  GradcheckReport report;
};

/// Float-64 checks of each tape primitive plus the similarity and loss
/// gradients, on small seeded random inputs.
std::vector<NamedGradcheck> primitive_gradchecks(std::uint64_t seed, const GradcheckOptions& options = {});

/// The composite loss is a sum over many max-pooled paths, so argmax switches
/// sit close together; a smaller step keeps most probes clear of them.
inline constexpr double kCompositeStep = 1e-6;

/// Encoder -> similarity -> weighted BCE (sum) on `tracks_T` random 72 x 64
/// patches with the default channel plan, in float-64. Probes
/// `coords_per_tensor` seeded coordinates of every parameter tensor.
NamedGradcheck composite_gradcheck(std::size_t tracks_T, std::uint64_t seed, std::size_t coords_per_tensor,
                                   const GradcheckOptions& options);

inline NamedGradcheck composite_gradcheck(std::size_t tracks_T, std::uint64_t seed, std::size_t coords_per_tensor) {
  GradcheckOptions options;
  options.step = kCompositeStep;
  return composite_gradcheck(tracks_T, seed, coords_per_tensor, options);
}

}  // namespace ssmnet
