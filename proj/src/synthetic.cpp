#include "akl/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace akl {

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "lowfreq") return SyntheticKind::lowfreq;
  if (name == "lowrank") return SyntheticKind::lowrank;
  if (name == "checkerboard") return SyntheticKind::checkerboard;
  throw InvalidInput("unknown synthetic kind '" + std::string(name) + "'");
}

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::lowfreq: return "lowfreq";
    case SyntheticKind::lowrank: return "lowrank";
    case SyntheticKind::checkerboard: return "checkerboard";
  }
  return "unknown";
}

namespace {

ImageGrid lowfreq(std::size_t n, const SyntheticParams& p, std::uint64_t seed) {
  if (p.components == 0 || p.components > 4)
    throw InvalidInput("lowfreq: components must be in [1, 4]");
  if (p.max_frequency == 0) throw InvalidInput("lowfreq: max_frequency must be >= 1");
  ImageGrid img(n, p.channels);
  for (std::size_t ch = 0; ch < p.channels; ++ch) {
    Rng rng(derive_seed(seed, ch));
    std::uniform_int_distribution<std::size_t> freq(0, p.max_frequency);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> amp(0.5, 1.0);
    struct Wave { double fx, fy, ph, a; };
    std::vector<Wave> waves;
    double amp_sum = 0.0;
    for (std::size_t k = 0; k < p.components; ++k) {
      Wave w{static_cast<double>(freq(rng)), static_cast<double>(freq(rng)),
             phase(rng), amp(rng)};
      amp_sum += w.a;
      waves.push_back(w);
    }
    for (std::size_t r = 0; r < n; ++r) {
      const double x = (static_cast<double>(r) + 0.5) / static_cast<double>(n);
      for (std::size_t c = 0; c < n; ++c) {
        const double y = (static_cast<double>(c) + 0.5) / static_cast<double>(n);
        double s = 0.0;
        for (const auto& w : waves)
          s += w.a * std::cos(std::numbers::pi * (w.fx * x + w.fy * y) + w.ph);
        img.at(r, c, ch) = 0.5 + 0.5 * s / amp_sum;
      }
    }
  }
  return img;
}

ImageGrid lowrank(std::size_t n, const SyntheticParams& p, std::uint64_t seed) {
  if (p.rank == 0 || p.rank > n) throw InvalidInput("lowrank: rank must be in [1, N]");
  ImageGrid img(n, p.channels);
  for (std::size_t ch = 0; ch < p.channels; ++ch) {
    Rng rng(derive_seed(seed, ch));
    const Eigen::Index ni = static_cast<Eigen::Index>(n);
    const Eigen::Index r = static_cast<Eigen::Index>(p.rank);
    const Matrix a = uniform_matrix(rng, ni, r);
    const Matrix b = uniform_matrix(rng, ni, r);
    img.set_channel(ch, (a * b.transpose()) / static_cast<double>(p.rank));
  }
  return img;
}

ImageGrid checkerboard(std::size_t n, const SyntheticParams& p) {
  if (p.block == 0) throw InvalidInput("checkerboard: block must be >= 1");
  ImageGrid img(n, p.channels);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t ch = 0; ch < p.channels; ++ch)
        img.at(r, c, ch) = ((r / p.block + c / p.block) % 2 == 0) ? 0.0 : 1.0;
  return img;
}

}  // namespace

ImageGrid gen_synthetic(SyntheticKind kind, std::size_t side,
                        const SyntheticParams& params, std::uint64_t seed) {
  if (side < 2) throw InvalidInput("gen_synthetic: N must be >= 2");
  if (params.channels != 1 && params.channels != 3)
    throw InvalidInput("gen_synthetic: channels must be 1 or 3");
  switch (kind) {
    case SyntheticKind::lowfreq: return lowfreq(side, params, seed);
    case SyntheticKind::lowrank: return lowrank(side, params, seed);
    case SyntheticKind::checkerboard: return checkerboard(side, params);
  }
  throw InvalidInput("gen_synthetic: unknown kind");
}

}  // namespace akl
