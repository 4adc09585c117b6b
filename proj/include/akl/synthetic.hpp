#pragma once

#include <cstdint>
#include <string_view>

#include "akl/grid.hpp"

namespace akl {

enum class SyntheticKind { lowfreq, lowrank, checkerboard };

SyntheticKind parse_synthetic_kind(std::string_view name);
std::string_view to_string(SyntheticKind kind);

struct SyntheticParams {
  std::size_t channels = 1;
  std::size_t rank = 1;             // lowrank
  std::size_t components = 4;       // lowfreq, at most 4
  std::size_t max_frequency = 2;    // lowfreq
  std::size_t block = 1;            // checkerboard cell size in pixels
};

/// Deterministic synthetic image with intensities in [0, 1].
///
/// lowfreq samples one continuous function on [0,1]^2 at cell centres
/// ((i + 0.5) / N), so images generated with the same seed at different N are
/// discretisations of the same underlying field. lowrank is (1/r) sum_k a_k
/// b_k^T with U(0,1) factors; checkerboard alternates 0/1 cells.
ImageGrid gen_synthetic(SyntheticKind kind, std::size_t side,
                        const SyntheticParams& params, std::uint64_t seed);

}  // namespace akl
