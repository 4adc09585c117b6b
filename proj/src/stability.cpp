#include "akl/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "akl/lowrank.hpp"
#include "akl/parallel.hpp"
#include "akl/stats.hpp"
#include "akl/synthetic.hpp"

namespace akl {

namespace {

std::size_t grid_side(Eigen::Index p) {
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(p))));
  if (n * n != static_cast<std::size_t>(p))
    throw InvalidInput("token count is not a perfect square");
  return n;
}

}  // namespace

double feature_sup(const Matrix& v) { return par::row_norms(v).maxCoeff(); }

double feature_bv(const Matrix& v, std::size_t n) {
  if (static_cast<std::size_t>(v.rows()) != n * n)
    throw InvalidInput("feature_bv: p must equal n^2");
  require_finite(v, "feature_bv");
  std::vector<double> per(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const auto i = static_cast<Eigen::Index>(r * n + c);
      double s = 0.0;
      auto add = [&](std::size_t rr, std::size_t cc) {
        s += (v.row(i) - v.row(static_cast<Eigen::Index>(rr * n + cc))).squaredNorm();
      };
      if (r > 0) add(r - 1, c);
      if (r + 1 < n) add(r + 1, c);
      if (c > 0) add(r, c - 1);
      if (c + 1 < n) add(r, c + 1);
      per[r * n + c] = std::sqrt(s);
    }
  double total = 0.0;
  for (double x : per) total += x;
  return total;
}

PropagationTrace propagate(const TokenMatrix& y0,
                           const std::vector<AttentionWeights>& layers,
                           AttentionVariant variant, bool pure_kernel) {
  y0.validate();
  const std::size_t n = grid_side(y0.count());
  PropagationTrace trace;
  trace.states.push_back(y0.y);
  TokenMatrix cur = y0;
  for (const auto& w : layers) {
    w.validate();
    if (w.width() != y0.width())
      throw InvalidInput("propagate: layer width does not match tokens");
    Matrix next;
    if (pure_kernel) {
      if (!w.value_is_identity())
        throw InvalidConfiguration("propagate: pure kernel requires W^V = I");
      const Matrix a = attention_matrix(cur.positions * w.wq, cur.positions * w.wk,
                                        variant, w.gamma);
      next = par::apply_rows(a, cur.y);
    } else {
      next = attention_block(cur, w, variant, true).y;
    }
    const Vector d = par::row_norms(next - cur.y);
    trace.drift.push_back(d.maxCoeff());
    trace.drift_l2.push_back(std::sqrt(d.squaredNorm() / static_cast<double>(d.size())));
    cur.y = std::move(next);
    trace.states.push_back(cur.y);
  }
  for (const auto& s : trace.states) {
    trace.bv_values.push_back(feature_bv(s, n));
    trace.sup_values.push_back(feature_sup(s));
  }
  return trace;
}

AttentionWeights stability_weights(std::size_t d, std::uint64_t seed, double gamma,
                                   double band_lo, double band_hi) {
  if (!(band_lo > 0.0) || band_hi < band_lo)
    throw InvalidInput("stability_weights: invalid spectral band");
  const auto di = static_cast<Eigen::Index>(d);
  AttentionWeights w = AttentionWeights::random(d, seed);
  Rng rng(derive_seed(seed, 1));
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix gap = gaussian_matrix(rng, di, di, s);
  const double norm = spectral_norm(gap);
  gap *= std::clamp(norm, band_lo, band_hi) / norm;
  w.wq = w.wk + gap;
  w.wv = Matrix::Identity(di, di);
  w.gamma = gamma;
  return w;
}

ModulusSplit modulus_decomposition(const Matrix& v, const DiscreteKernel& k,
                                   std::size_t n, double delta) {
  if (!k.symmetric) throw UnsupportedVariant("modulus_decomposition: symmetric kernel required");
  if (static_cast<std::size_t>(v.rows()) != n * n || k.size() != v.rows())
    throw InvalidInput("modulus_decomposition: p must equal n^2");
  const Matrix a = k.normalized();
  const Matrix centres = patch_centres(n);
  const double radius = delta / static_cast<double>(n);
  ModulusSplit out{Matrix::Zero(v.rows(), v.cols()), Matrix::Zero(v.rows(), v.cols())};
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.rows(); ++j) {
      const RowVector term = a(i, j) * (v.row(j) - v.row(i));
      if ((centres.row(i) - centres.row(j)).norm() < radius)
        out.near.row(i) += term;
      else
        out.far.row(i) += term;
    }
  out.near_norm = par::row_norms(out.near).maxCoeff();
  out.far_norm = par::row_norms(out.far).maxCoeff();
  out.total_norm = par::row_norms(out.near + out.far).maxCoeff();
  return out;
}

TokenMatrix continuum_tokens(std::size_t n, std::size_t patch_side,
                             std::size_t channels, std::uint64_t image_seed) {
  SyntheticParams params;
  params.channels = channels;
  const ImageGrid img =
      gen_synthetic(SyntheticKind::lowfreq, n * patch_side, params, image_seed);
  const Patchification sel = select_all(patchify(img, n));
  const PatchEmbeddingMatrix emb = embed_selected(img, sel);
  return TokenMatrix::from_content(emb.y, positional_embedding(n, static_cast<std::size_t>(emb.y.cols())));
}

namespace {

void summarize(DriftScan& scan, const std::vector<std::size_t>& n_values) {
  std::vector<double> all_rho;
  for (auto n : n_values) {
    std::vector<double> drifts;
    double max_rho = 0.0;
    for (auto& row : scan.rows) {
      if (row.n != n) continue;
      const double scale = (row.sup + row.bv) / static_cast<double>(n);
      row.rho = scale > 0.0 ? row.drift / scale : 0.0;
      drifts.push_back(row.drift);
      all_rho.push_back(row.rho);
      max_rho = std::max(max_rho, row.rho);
    }
    scan.median_drift.push_back(drifts.empty() ? 0.0 : median(drifts));
    scan.max_rho.push_back(max_rho);
  }
  scan.max_rho_all = all_rho.empty() ? 0.0 : *std::max_element(all_rho.begin(), all_rho.end());
  scan.median_rho_all = all_rho.empty() ? 0.0 : median(all_rho);
  scan.degenerate = std::any_of(scan.median_drift.begin(), scan.median_drift.end(),
                                [](double x) { return !(x > 0.0); });
  if (scan.degenerate) {
    scan.slope = scan.intercept = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::vector<double> ns(n_values.begin(), n_values.end());
    const LineFit fit = loglog_fit(ns, scan.median_drift);
    scan.slope = fit.slope;
    scan.intercept = fit.intercept;
  }
}

}  // namespace

StabilityReport verify_bound(const StabilityScanConfig& config) {
  if (config.n_values.size() < 3)
    throw InvalidConfiguration("stability: at least 3 n values required");
  if (config.seeds < 1) throw InvalidConfiguration("stability: seeds must be >= 1");
  if (config.layers < 1) throw InvalidConfiguration("stability: layers must be >= 1");
  const std::size_t d = config.patch_side * config.patch_side * config.channels;
  const std::size_t nn = config.n_values.size();

  std::vector<TokenMatrix> tokens;
  for (auto n : config.n_values)
    tokens.push_back(continuum_tokens(n, config.patch_side, config.channels,
                                      config.image_seed));

  std::vector<PropagationTrace> traces(nn * config.seeds);
  std::vector<std::vector<double>> single(nn * config.seeds);
  par::for_each_index(traces.size(), [&](std::size_t k) {
    const std::size_t s = k % config.seeds;
    const TokenMatrix& input = tokens[k / config.seeds];
    std::vector<AttentionWeights> layers;
    const std::uint64_t base = derive_seed(config.seed, s);
    for (std::size_t t = 0; t < config.layers; ++t)
      layers.push_back(stability_weights(d, derive_seed(base, t), config.gamma));
    traces[k] = propagate(input, layers, config.variant, true);
    for (const auto& w : layers)
      single[k].push_back(propagate(input, {w}, config.variant, true).drift.front());
  });

  StabilityReport rep;
  for (std::size_t ni = 0; ni < nn; ++ni)
    for (std::size_t s = 0; s < config.seeds; ++s) {
      const std::size_t k = ni * config.seeds + s;
      const auto& tr = traces[k];
      for (std::size_t t = 0; t < tr.layers(); ++t) {
        rep.layerwise.rows.push_back({config.n_values[ni], s, t, single[k][t],
                                      tr.sup_values[0], tr.bv_values[0], 0.0});
        rep.composed.rows.push_back({config.n_values[ni], s, t, tr.drift[t],
                                     tr.sup_values[t], tr.bv_values[t], 0.0});
      }
    }
  summarize(rep.layerwise, config.n_values);
  summarize(rep.composed, config.n_values);

  // A constant field on the largest grid must be a fixed point.
  TokenMatrix flat = tokens.back();
  flat.y.rowwise() = RowVector::Constant(flat.width(), 0.5);
  std::vector<AttentionWeights> layers;
  for (std::size_t t = 0; t < config.layers; ++t)
    layers.push_back(stability_weights(d, derive_seed(derive_seed(config.seed, 0), t),
                                       config.gamma));
  const PropagationTrace ct = propagate(flat, layers, config.variant, true);
  for (double x : ct.drift) rep.constant_drift = std::max(rep.constant_drift, x);
  return rep;
}

}  // namespace akl
