#include "akl/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "akl/fredholm.hpp"
#include "akl/grid.hpp"
#include "akl/image_io.hpp"
#include "akl/interpolation.hpp"
#include "akl/kernel_analysis.hpp"
#include "akl/lowrank.hpp"
#include "akl/parallel.hpp"
#include "akl/reference.hpp"
#include "akl/stability.hpp"
#include "akl/stats.hpp"
#include "akl/synthetic.hpp"

namespace akl {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

namespace {

[[noreturn]] void bad(const std::string& msg) {
  throw InvalidConfiguration("config: " + msg);
}

class Reader {
 public:
  Reader(const Json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) bad(where_ + " must be an object");
  }

  void size(const char* key, std::size_t& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number_unsigned()) bad(path(key) + " must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void u64(const char* key, std::uint64_t& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number_unsigned()) bad(path(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void real(const char* key, double& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number()) bad(path(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void text(const char* key, std::string& out) {
    if (const Json* v = take(key)) {
      if (!v->is_string()) bad(path(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  void sizes(const char* key, std::vector<std::size_t>& out) {
    if (const Json* v = take(key)) {
      if (!v->is_array()) bad(path(key) + " must be an array");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned()) bad(path(key) + " entries must be non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  void reals(const char* key, std::vector<double>& out) {
    if (const Json* v = take(key)) {
      if (!v->is_array()) bad(path(key) + " must be an array");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) bad(path(key) + " entries must be numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  const Json* section(const char* key) { return take(key); }

  void finish() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.count(k)) bad("unknown key '" + path(k.c_str()) + "'");
  }

 private:
  const Json* take(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }
  std::string path(const char* key) const {
    return where_.empty() ? std::string(key) : where_ + "." + key;
  }

  const Json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) bad(msg);
}

void require_n_values(const std::vector<std::size_t>& ns, const std::string& where) {
  require(ns.size() >= 3, where + ".n_values needs at least 3 entries");
  require(std::set<std::size_t>(ns.begin(), ns.end()).size() == ns.size(),
          where + ".n_values must be distinct");
  for (auto n : ns) require(n >= 2, where + ".n_values entries must be >= 2");
}

const std::set<std::string> kExperiments{"bv",        "patchify",      "lowrank", "kernel",
                                         "stability", "fredholm", "interpolation", "all"};

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader r(root, "");
  r.text("experiment", c.experiment);
  r.u64("seed", c.seed);
  r.text("output_dir", c.output_dir);
  if (c.experiment.empty()) bad("'experiment' is required");
  if (!kExperiments.count(c.experiment)) bad("unknown experiment '" + c.experiment + "'");

  if (const Json* s = r.section("bv")) {
    Reader b(*s, "bv");
    b.text("image", c.bv.image);
    b.text("kind", c.bv.kind);
    b.size("side", c.bv.side);
    b.finish();
  }
  if (const Json* s = r.section("patchify")) {
    Reader b(*s, "patchify");
    b.size("image_side", c.patchify.image_side);
    b.size("per_axis", c.patchify.per_axis);
    b.size("channels", c.patchify.channels);
    b.size("decoder_d", c.patchify.decoder_d);
    b.real("mask_ratio", c.patchify.mask_ratio);
    b.size("selection_seeds", c.patchify.selection_seeds);
    b.finish();
  }
  if (const Json* s = r.section("lowrank")) {
    Reader b(*s, "lowrank");
    b.sizes("ranks", c.lowrank.ranks);
    b.sizes("patch_sides", c.lowrank.patch_sides);
    b.sizes("per_axis", c.lowrank.per_axis);
    b.reals("noise_levels", c.lowrank.noise_levels);
    b.size("trials", c.lowrank.trials);
    b.size("als_iterations", c.lowrank.als_iterations);
    b.size("exact_trials", c.lowrank.exact_trials);
    b.size("exact_rank", c.lowrank.exact_rank);
    b.size("exact_image_side", c.lowrank.exact_image_side);
    b.size("exact_per_axis", c.lowrank.exact_per_axis);
    b.finish();
  }
  if (const Json* s = r.section("kernel")) {
    Reader b(*s, "kernel");
    b.size("instances", c.kernel.instances);
    b.size("max_p", c.kernel.max_p);
    b.size("max_d", c.kernel.max_d);
    b.real("gamma", c.kernel.gamma);
    b.size("p", c.kernel.p);
    b.size("d", c.kernel.d);
    b.sizes("decay_n", c.kernel.decay_n);
    b.size("decay_d", c.kernel.decay_d);
    b.reals("spectrum_gammas", c.kernel.spectrum_gammas);
    b.finish();
  }
  if (const Json* s = r.section("stability")) {
    Reader b(*s, "stability");
    std::string variant(to_string(c.stability.variant));
    b.sizes("n_values", c.stability.n_values);
    b.size("seeds", c.stability.seeds);
    b.size("layers", c.stability.layers);
    b.real("gamma", c.stability.gamma);
    b.size("patch_side", c.stability.patch_side);
    b.size("channels", c.stability.channels);
    b.text("variant", variant);
    b.u64("image_seed", c.stability.image_seed);
    b.size("comparison_seeds", c.stability.comparison_seeds);
    b.real("near_delta", c.stability.near_delta);
    b.finish();
    try {
      c.stability.variant = parse_attention_variant(variant);
    } catch (const InvalidInput& e) {
      bad(std::string("stability.variant: ") + e.what());
    }
  }
  if (const Json* s = r.section("fredholm")) {
    Reader b(*s, "fredholm");
    b.size("p", c.fredholm.p);
    b.size("d", c.fredholm.d);
    b.real("beta", c.fredholm.beta);
    b.size("grid_n", c.fredholm.grid_n);
    b.real("gamma", c.fredholm.gamma);
    b.real("pinv_tol", c.fredholm.pinv_tol);
    b.real("noise", c.fredholm.noise);
    b.reals("betas", c.fredholm.betas);
    b.finish();
  }
  if (const Json* s = r.section("interpolation")) {
    Reader b(*s, "interpolation");
    b.sizes("n_values", c.interpolation.n_values);
    b.size("seeds", c.interpolation.seeds);
    b.real("mask_ratio", c.interpolation.mask_ratio);
    b.size("patch_side", c.interpolation.patch_side);
    b.size("channels", c.interpolation.channels);
    b.u64("image_seed", c.interpolation.image_seed);
    b.text("mask_token", c.interpolation.mask_token);
    b.size("weight_cases", c.interpolation.weight_cases);
    b.finish();
  }
  r.finish();

  if (!c.bv.image.empty() && fs::path(c.bv.image).is_relative() && !base_dir.empty())
    c.bv.image = (base_dir / c.bv.image).lexically_normal().string();
  try {
    parse_synthetic_kind(c.bv.kind);
  } catch (const InvalidInput& e) {
    bad(std::string("bv.kind: ") + e.what());
  }
  require(c.bv.side >= 2, "bv.side must be >= 2");

  const auto& g = c.patchify;
  require(g.per_axis >= 1 && g.image_side >= 2 && g.image_side % g.per_axis == 0,
          "patchify.per_axis must divide patchify.image_side");
  require(g.channels == 1 || g.channels == 3, "patchify.channels must be 1 or 3");
  require(g.image_side / g.per_axis >= 2, "patchify patches must be at least 2x2");
  require(g.decoder_d >= 1, "patchify.decoder_d must be >= 1");
  require(g.mask_ratio >= 0.0 && g.mask_ratio < 1.0, "patchify.mask_ratio must be in [0, 1)");

  const auto& l = c.lowrank;
  require(!l.ranks.empty() && !l.patch_sides.empty() && !l.per_axis.empty(),
          "lowrank ranges must be non-empty");
  for (auto v : l.ranks) require(v >= 1, "lowrank.ranks must be >= 1");
  for (auto v : l.patch_sides) require(v >= 2, "lowrank.patch_sides must be >= 2");
  for (auto v : l.per_axis) require(v >= 1, "lowrank.per_axis must be >= 1");
  for (auto v : l.noise_levels) require(v >= 0.0, "lowrank.noise_levels must be >= 0");
  require(l.trials >= 2, "lowrank.trials must be >= 2");
  require(l.als_iterations >= 1, "lowrank.als_iterations must be >= 1");
  require(l.exact_per_axis >= 1 && l.exact_image_side % l.exact_per_axis == 0,
          "lowrank.exact_per_axis must divide exact_image_side");
  require(l.exact_rank >= 1 && l.exact_rank < l.exact_image_side / l.exact_per_axis,
          "lowrank.exact_rank must satisfy 1 <= r < N_c");

  const auto& k = c.kernel;
  require(k.max_p >= 1 && k.max_d >= 1 && k.p >= 2 && k.d >= 1, "kernel sizes must be positive");
  require(k.gamma >= 0.0, "kernel.gamma must be >= 0");
  require(k.decay_d >= 4 && k.decay_d % 2 == 0, "kernel.decay_d must be even and >= 4");
  for (auto n : k.decay_n) require(n >= 2, "kernel.decay_n entries must be >= 2");

  const auto& s = c.stability;
  require_n_values(s.n_values, "stability");
  require(s.seeds >= 1 && s.patch_side >= 2, "stability.seeds and patch_side must be positive");
  require(s.channels == 1 || s.channels == 3, "stability.channels must be 1 or 3");
  require(s.gamma > 0.0, "stability.gamma must be > 0");
  require(s.near_delta >= 0.0, "stability.near_delta must be >= 0");

  const auto& f = c.fredholm;
  require(f.p >= 2 && f.d >= 1 && f.grid_n >= 2, "fredholm sizes must be positive");
  require(f.beta > 0.0, "fredholm.beta must be > 0");
  require(f.pinv_tol > 0.0 && f.noise > 0.0, "fredholm.pinv_tol and noise must be > 0");
  require(f.betas.size() >= 2, "fredholm.betas needs at least 2 entries");
  for (auto b : f.betas) require(b > 0.0, "fredholm.betas must be > 0");

  const auto& ip = c.interpolation;
  require_n_values(ip.n_values, "interpolation");
  require(ip.seeds >= 1 && ip.patch_side >= 2, "interpolation.seeds and patch_side must be positive");
  require(ip.channels == 1 || ip.channels == 3, "interpolation.channels must be 1 or 3");
  require(ip.mask_ratio >= 0.0 && ip.mask_ratio < 1.0, "interpolation.mask_ratio must be in [0, 1)");
  for (auto n : ip.n_values) {
    const auto p = static_cast<double>(n * n);
    require(p - std::llround(ip.mask_ratio * p) >= 2,
            "interpolation.mask_ratio leaves fewer than 2 visible patches at n = " + std::to_string(n));
  }
  require(ip.mask_token == "zero" || ip.mask_token == "mean" || ip.mask_token == "random",
          "interpolation.mask_token must be zero, mean or random");
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfiguration("config: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["bv"] = {{"image", c.bv.image}, {"kind", c.bv.kind}, {"side", c.bv.side}};
  j["patchify"] = {{"image_side", c.patchify.image_side},
                   {"per_axis", c.patchify.per_axis},
                   {"channels", c.patchify.channels},
                   {"decoder_d", c.patchify.decoder_d},
                   {"mask_ratio", c.patchify.mask_ratio},
                   {"selection_seeds", c.patchify.selection_seeds}};
  j["lowrank"] = {{"ranks", c.lowrank.ranks},
                  {"patch_sides", c.lowrank.patch_sides},
                  {"per_axis", c.lowrank.per_axis},
                  {"noise_levels", c.lowrank.noise_levels},
                  {"trials", c.lowrank.trials},
                  {"als_iterations", c.lowrank.als_iterations},
                  {"exact_trials", c.lowrank.exact_trials},
                  {"exact_rank", c.lowrank.exact_rank},
                  {"exact_image_side", c.lowrank.exact_image_side},
                  {"exact_per_axis", c.lowrank.exact_per_axis}};
  j["kernel"] = {{"instances", c.kernel.instances},
                 {"max_p", c.kernel.max_p},
                 {"max_d", c.kernel.max_d},
                 {"gamma", c.kernel.gamma},
                 {"p", c.kernel.p},
                 {"d", c.kernel.d},
                 {"decay_n", c.kernel.decay_n},
                 {"decay_d", c.kernel.decay_d},
                 {"spectrum_gammas", c.kernel.spectrum_gammas}};
  j["stability"] = {{"n_values", c.stability.n_values},
                    {"seeds", c.stability.seeds},
                    {"layers", c.stability.layers},
                    {"gamma", c.stability.gamma},
                    {"patch_side", c.stability.patch_side},
                    {"channels", c.stability.channels},
                    {"variant", std::string(to_string(c.stability.variant))},
                    {"image_seed", c.stability.image_seed},
                    {"comparison_seeds", c.stability.comparison_seeds},
                    {"near_delta", c.stability.near_delta}};
  j["fredholm"] = {{"p", c.fredholm.p},
                   {"d", c.fredholm.d},
                   {"beta", c.fredholm.beta},
                   {"grid_n", c.fredholm.grid_n},
                   {"gamma", c.fredholm.gamma},
                   {"pinv_tol", c.fredholm.pinv_tol},
                   {"noise", c.fredholm.noise},
                   {"betas", c.fredholm.betas}};
  j["interpolation"] = {{"n_values", c.interpolation.n_values},
                        {"seeds", c.interpolation.seeds},
                        {"mask_ratio", c.interpolation.mask_ratio},
                        {"patch_side", c.interpolation.patch_side},
                        {"channels", c.interpolation.channels},
                        {"image_seed", c.interpolation.image_seed},
                        {"mask_token", c.interpolation.mask_token},
                        {"weight_cases", c.interpolation.weight_cases}};
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  Json j = config_to_json(config);
  j.erase("output_dir");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

// ---------------------------------------------------------------- output

bool ExperimentOutput::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

bool RunResult::passed() const {
  return std::all_of(experiments.begin(), experiments.end(),
                     [](const ExperimentOutput& e) { return e.passed(); });
}

namespace {

Check at_most(std::string name, double value, double bound) {
  return {std::move(name), value, "<=", bound, 0.0, value <= bound};
}

Check at_least(std::string name, double value, double bound) {
  return {std::move(name), value, ">=", bound, 0.0, value >= bound};
}

Check within(std::string name, double value, double lo, double hi) {
  return {std::move(name), value, "in", lo, hi, value >= lo && value <= hi};
}

class Csv {
 public:
  explicit Csv(std::initializer_list<std::string> header) {
    bool first = true;
    for (const auto& h : header) {
      if (!first) text_ << ',';
      text_ << h;
      first = false;
    }
    text_ << '\n';
  }
  template <class... T>
  void row(const T&... fields) {
    bool first = true;
    ((put(fields, first)), ...);
    text_ << '\n';
  }
  void save(const fs::path& path, ExperimentOutput& out) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot write " + path.string());
    f << text_.str();
    out.files.push_back(path.filename().string());
  }

 private:
  void put(double v, bool& first) { sep(first); text_ << format_double(v); }
  void put(std::size_t v, bool& first) { sep(first); text_ << v; }
  void put(int v, bool& first) { sep(first); text_ << v; }
  void put(const std::string& v, bool& first) { sep(first); text_ << v; }
  void put(std::string_view v, bool& first) { sep(first); text_ << v; }
  void put(const char* v, bool& first) { sep(first); text_ << v; }
  void sep(bool& first) {
    if (!first) text_ << ',';
    first = false;
  }
  std::ostringstream text_;
};

Json checks_json(const std::vector<Check>& checks) {
  Json arr = Json::array();
  for (const auto& c : checks) {
    Json j{{"name", c.name}, {"value", c.value}, {"relation", c.relation}};
    if (c.relation == "in") {
      j["lo"] = c.lo;
      j["hi"] = c.hi;
    } else {
      j["threshold"] = c.lo;
    }
    j["passed"] = c.passed;
    arr.push_back(j);
  }
  return arr;
}

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

std::uint64_t stream(std::uint64_t seed, std::uint64_t experiment) {
  return derive_seed(seed, experiment);
}

}  // namespace

// ---------------------------------------------------------------- bv

ExperimentOutput run_bv(const ExperimentConfig& c, const fs::path& dir) {
  ExperimentOutput out{"bv", {}, Json::object(), {}};
  std::string source = c.bv.image;
  const ImageGrid img = c.bv.image.empty()
                            ? gen_synthetic(parse_synthetic_kind(c.bv.kind), c.bv.side, {},
                                            stream(c.seed, 1))
                            : read_image(c.bv.image);
  if (source.empty()) source = "synthetic:" + c.bv.kind;
  else source = fs::path(source).filename().string();
  const double bv = bv_seminorm(img);
  const double oracle = ref::bv_seminorm(img);

  ImageGrid doubled = img;
  for (auto& v : doubled.pixels()) v *= -2.0;
  ImageGrid flat = img;
  for (auto& v : flat.pixels()) v = 0.25;

  double patchwise = 0.0;
  std::size_t split = 0;
  for (std::size_t n = 2; n <= img.side(); ++n)
    if (img.side() % n == 0) {
      split = n;
      break;
    }
  if (split) patchwise = patchwise_bv(img, patchify(img, split));

  Csv csv({"source", "side", "channels", "bv"});
  csv.row(source, img.side(), img.channels(), bv);
  csv.save(dir / "bv.csv", out);

  out.checks.push_back(at_most("bv_reference_match", std::abs(bv - oracle), 1e-12 * std::max(1.0, bv)));
  out.checks.push_back(at_most("bv_homogeneity", std::abs(bv_seminorm(doubled) - 2.0 * bv),
                               1e-12 * std::max(1.0, bv)));
  out.checks.push_back(at_most("bv_constant_zero", bv_seminorm(flat), 0.0));
  if (split)
    out.checks.push_back(at_most("bv_patchwise_minus_full", patchwise - bv, 0.0));
  out.summary["source"] = source;
  out.summary["bv"] = bv;
  out.summary["patchwise_bv"] = patchwise;
  return out;
}

// ---------------------------------------------------------------- patchify

GeometryReport geometry_self_test(const PatchifySection& g, std::uint64_t seed) {
  GeometryReport rep;
  SyntheticParams params;
  params.channels = g.channels;
  const ImageGrid img = gen_synthetic(SyntheticKind::lowfreq, g.image_side, params, seed);
  const Patchification pf = patchify(img, g.per_axis);
  rep.patches = pf.count();
  rep.patch_side = pf.patch_side();
  const PatchEmbeddingMatrix emb = embed_selected(img, select_all(pf));
  rep.encoder_d = static_cast<std::size_t>(emb.y.cols());
  const TokenMatrix tokens =
      TokenMatrix::from_content(emb.y, positional_embedding(g.per_axis, rep.encoder_d));
  const MaskedTokenSet enc_mask = build_masked_input(
      tokens.with_positions(), g.mask_ratio, RowVector::Zero(tokens.width()), derive_seed(seed, 1));
  rep.visible = enc_mask.unmasked.size();

  // Encoder on the visible tokens only, then the decoder sees the visible
  // encodings and one shared mask token per masked patch.
  const auto de = static_cast<Eigen::Index>(rep.encoder_d);
  const auto dd = static_cast<Eigen::Index>(g.decoder_d);
  Matrix visible(static_cast<Eigen::Index>(rep.visible), de);
  for (std::size_t t = 0; t < enc_mask.unmasked.size(); ++t)
    visible.row(static_cast<Eigen::Index>(t)) =
        tokens.with_positions().y.row(static_cast<Eigen::Index>(enc_mask.unmasked[t]));
  const AttentionWeights enc_w = AttentionWeights::random(rep.encoder_d, derive_seed(seed, 2));
  const Matrix encoded = attend(visible, visible, enc_w, AttentionVariant::softmax).z;

  Rng rng(derive_seed(seed, 3));
  const Matrix embed = gaussian_matrix(rng, de, dd, 1.0 / std::sqrt(static_cast<double>(de)));
  const Matrix reproj = gaussian_matrix(rng, dd, de, 1.0 / std::sqrt(static_cast<double>(dd)));
  const RowVector mask_token = gaussian_matrix(rng, 1, dd, 0.02);
  Matrix dec_in(static_cast<Eigen::Index>(pf.count()), dd);
  for (auto i : enc_mask.masked) dec_in.row(static_cast<Eigen::Index>(i)) = mask_token;
  for (std::size_t t = 0; t < enc_mask.unmasked.size(); ++t)
    dec_in.row(static_cast<Eigen::Index>(enc_mask.unmasked[t])) =
        encoded.row(static_cast<Eigen::Index>(t)) * embed;
  rep.decoder_d = static_cast<std::size_t>(dec_in.cols());
  MaskedTokenSet dec{dec_in, Matrix::Zero(dec_in.rows(), dd), enc_mask.masked,
                     enc_mask.unmasked, mask_token};
  dec.validate();
  const AttentionWeights dec_w = AttentionWeights::random(g.decoder_d, derive_seed(seed, 4));
  const Matrix out = attend(dec.y, dec.y, dec_w, AttentionVariant::softmax).z * reproj;

  std::vector<PatchArray> patches;
  const auto nc = pf.patch_side();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    PatchArray pa{nc, g.channels, std::vector<double>(out.row(i).data(), out.row(i).data() + 0)};
    pa.values.resize(static_cast<std::size_t>(out.cols()));
    for (Eigen::Index k = 0; k < out.cols(); ++k) pa.values[static_cast<std::size_t>(k)] = out(i, k);
    patches.push_back(std::move(pa));
  }
  const ImageGrid recon = extension_sum(pf, patches);
  rep.reconstructed_side = recon.side();
  rep.reconstructed_channels = recon.channels();
  const std::size_t expected_visible =
      pf.count() - static_cast<std::size_t>(std::llround(g.mask_ratio * static_cast<double>(pf.count())));
  rep.consistent = rep.patches == g.per_axis * g.per_axis &&
                   rep.patch_side * g.per_axis == g.image_side &&
                   rep.encoder_d == rep.patch_side * rep.patch_side * g.channels &&
                   rep.visible == expected_visible && rep.decoder_d == g.decoder_d &&
                   static_cast<std::size_t>(out.cols()) == rep.encoder_d &&
                   rep.reconstructed_side == g.image_side &&
                   rep.reconstructed_channels == g.channels && out.allFinite();
  return rep;
}

ExperimentOutput run_patchify(const ExperimentConfig& c, const fs::path& dir) {
  ExperimentOutput out{"patchify", {}, Json::object(), {}};
  const auto& g = c.patchify;
  SyntheticParams params;
  params.channels = g.channels;
  const ImageGrid img = gen_synthetic(SyntheticKind::lowfreq, g.image_side, params, stream(c.seed, 2));
  const Patchification pf = patchify(img, g.per_axis);
  const ImageGrid round = extension_sum(pf, restrict_all(img, pf));

  Csv ranges({"index", "patch_row", "patch_col", "row0", "col0", "size"});
  for (std::size_t i = 0; i < pf.count(); ++i) {
    const auto& r = pf.range(i);
    ranges.row(i, pf.patch_row(i), pf.patch_col(i), r.row0, r.col0, r.size);
  }
  ranges.save(dir / "patches.csv", out);

  Csv sel({"seed", "patch_row", "patch_index", "patch_col"});
  std::size_t violations = 0;
  for (std::size_t s = 0; s < g.selection_seeds; ++s) {
    const Patchification chosen = select_patches(pf, derive_seed(stream(c.seed, 3), s));
    if (!chosen.selection_is_row_permutation()) ++violations;
    for (std::size_t r = 0; r < chosen.selection()->size(); ++r) {
      const auto idx = (*chosen.selection())[r];
      sel.row(s, r, idx, chosen.patch_col(idx));
    }
  }
  sel.save(dir / "selections.csv", out);

  const double full = bv_seminorm(img);
  const double split = patchwise_bv(img, pf);
  const GeometryReport geo = geometry_self_test(g, stream(c.seed, 4));

  out.checks.push_back(at_most("roundtrip_mismatches", round == img ? 0.0 : 1.0, 0.0));
  out.checks.push_back(at_most("selection_permutation_violations", static_cast<double>(violations), 0.0));
  out.checks.push_back(at_most("patchwise_bv_minus_full", split - full, 0.0));
  out.checks.push_back(at_least("geometry_consistent", geo.consistent ? 1.0 : 0.0, 1.0));
  out.summary["patches"] = geo.patches;
  out.summary["patch_side"] = geo.patch_side;
  out.summary["encoder_d"] = geo.encoder_d;
  out.summary["decoder_d"] = geo.decoder_d;
  out.summary["visible"] = geo.visible;
  out.summary["mask_ratio"] = g.mask_ratio;
  out.summary["reconstructed_side"] = geo.reconstructed_side;
  out.summary["bv_full"] = full;
  out.summary["bv_patchwise"] = split;
  return out;
}

// ---------------------------------------------------------------- lowrank

ExperimentOutput run_lowrank(const ExperimentConfig& c, const fs::path& dir) {
  ExperimentOutput out{"lowrank", {}, Json::object(), {}};
  const auto& l = c.lowrank;
  RecoveryScanConfig pc;
  pc.ranks = l.ranks;
  pc.patch_sides = l.patch_sides;
  pc.per_axis = l.per_axis;
  pc.noise_levels = l.noise_levels;
  pc.trials = l.trials;
  pc.als_iterations = l.als_iterations;
  pc.seed = stream(c.seed, 5);
  const RecoveryReport rep = verify_recovery(pc);

  const std::size_t nc = l.exact_image_side / l.exact_per_axis;
  std::vector<RecoveryTrial> exact(l.exact_trials);
  const std::uint64_t exact_seed = stream(c.seed, 6);
  par::for_each_index(l.exact_trials, [&](std::size_t t) {
    exact[t] = run_recovery_trial(l.exact_rank, nc, l.exact_per_axis, 0.0, t,
                                derive_seed(exact_seed, t), l.als_iterations);
  });

  Csv trials({"r", "N_c", "n", "epsilon", "bv_error", "ratio", "als_status", "seed"});
  auto emit = [&](const RecoveryTrial& t) {
    trials.row(t.rank, t.patch_side, t.per_axis, t.epsilon, t.bv_error, t.ratio,
               to_string(t.status), t.seed);
  };
  for (const auto& t : exact) emit(t);
  for (const auto& t : rep.trials) emit(t);
  trials.save(dir / "recovery.csv", out);

  Csv cells({"r", "N_c", "n", "noise_level", "trials", "failures", "median_ratio",
             "p95_ratio", "median_ratio_half", "median_relative_error", "ratio_grows"});
  Json cell_json = Json::array();
  double worst_shift = 0.0;
  for (const auto& cell : rep.cells) {
    cells.row(cell.rank, cell.patch_side, cell.per_axis, cell.noise_level, cell.trials,
              cell.failures, cell.median_ratio, cell.p95_ratio, cell.median_ratio_half,
              cell.median_relative_error, cell.ratio_grows ? 1 : 0);
    if (cell.noise_level > 0.0) {
      const double shift = std::isfinite(cell.median_ratio)
                               ? std::abs(cell.median_ratio - cell.median_ratio_half) /
                                     cell.median_ratio_half
                               : std::numeric_limits<double>::infinity();
      worst_shift = std::max(worst_shift, shift);
      out.checks.push_back(at_most("median_shift_r" + std::to_string(cell.rank) + "_Nc" +
                                       std::to_string(cell.patch_side) + "_n" +
                                       std::to_string(cell.per_axis) + "_eps" +
                                       format_double(cell.noise_level),
                                   shift, 0.2));
    }
    cell_json.push_back({{"r", cell.rank}, {"N_c", cell.patch_side}, {"n", cell.per_axis},
                         {"noise_level", cell.noise_level}, {"failures", cell.failures},
                         {"median_ratio", cell.median_ratio}, {"p95_ratio", cell.p95_ratio},
                         {"median_relative_error", cell.median_relative_error}});
  }
  cells.save(dir / "recovery_cells.csv", out);

  std::size_t recovered = 0;
  std::vector<double> exact_err;
  for (const auto& t : exact) {
    exact_err.push_back(t.relative_bv_error);
    if (t.relative_bv_error <= 1e-6) ++recovered;
  }
  const double rate = l.exact_trials ? static_cast<double>(recovered) / static_cast<double>(l.exact_trials) : 0.0;
  out.checks.insert(out.checks.begin(), at_least("exact_recovery_rate", rate, 0.95));
  out.summary["exact_recovery_rate"] = rate;
  out.summary["exact_median_relative_error"] = median(exact_err);
  out.summary["worst_median_shift"] = worst_shift;
  out.summary["cells"] = cell_json;
  out.summary["rejected"] = rep.rejected;
  return out;
}

// ---------------------------------------------------------------- kernel

ExperimentOutput run_kernel(const ExperimentConfig& c, const fs::path& dir) {
  ExperimentOutput out{"kernel", {}, Json::object(), {}};
  const auto& k = c.kernel;

  // Attention algebra over seeded instances.
  double row_sum = 0.0, min_entry = 1.0, convex = 0.0, identity = 0.0, sym = 0.0,
         asym_match = 0.0, asym_norm = 0.0;
  const std::uint64_t base = stream(c.seed, 7);
  for (std::size_t inst = 0; inst < k.instances; ++inst) {
    Rng rng(derive_seed(base, inst));
    const auto p = static_cast<Eigen::Index>(1 + rng() % k.max_p);
    const auto d = static_cast<Eigen::Index>(1 + rng() % k.max_d);
    const Matrix y = gaussian_matrix(rng, p, d);
    AttentionWeights w = AttentionWeights::random(static_cast<std::size_t>(d), rng(), 1);
    w.gamma = k.gamma;
    for (auto variant : {AttentionVariant::softmax, AttentionVariant::symmetrized}) {
      const AttentionOutput a = attend(y, y, w, variant);
      row_sum = std::max(row_sum, (a.attention.rowwise().sum().array() - 1.0).abs().maxCoeff());
      min_entry = std::min(min_entry, a.attention.minCoeff());
      const Matrix oracle = ref::convex_combination(a.attention, ref::matmul(y, w.wv));
      convex = std::max(convex, max_abs(a.z - oracle));
    }
    const Matrix q = y * w.wq, kk = y * w.wk;
    const Matrix l = attention_logits(q, kk, AttentionVariant::symmetrized, w.gamma);
    sym = std::max(sym, max_abs(l - l.transpose()) / std::max(1.0, max_abs(l)));
    const Matrix qv = gaussian_matrix(rng, 1, d), kv = gaussian_matrix(rng, 1, d);
    const auto [lhs, rhs] = dot_product_shift_identity(
        std::span<const double>(qv.data(), static_cast<std::size_t>(d)),
        std::span<const double>(kv.data(), static_cast<std::size_t>(d)));
    identity = std::max(identity, std::abs(lhs - rhs));
    const DiscreteKernel ak = kernel_from_projections(q, kk, KernelVariant::asymmetric, w.gamma);
    asym_match = std::max(asym_match,
                          max_abs(ak.normalized() - attend(y, y, w, AttentionVariant::softmax).attention));
    asym_norm = std::max(asym_norm, check_normalization(ak));
  }
  out.checks.push_back(at_most("attention_row_sum_error", row_sum, 1e-12));
  out.checks.push_back(at_least("attention_min_entry", min_entry, 0.0));
  out.checks.push_back(at_most("attention_convex_oracle_error", convex, 1e-10));
  out.checks.push_back(at_most("shift_identity_error", identity, 1e-12));
  out.checks.push_back(at_most("symmetrized_logit_asymmetry", sym, 1e-12));
  out.checks.push_back(at_most("asymmetric_kernel_vs_softmax", asym_match, 1e-10));
  out.checks.push_back(at_most("asymmetric_normalization", asym_norm, 1e-12));

  // Spectra of symmetric kernels on seeded tokens.
  double psd = std::numeric_limits<double>::infinity(), mercer = 0.0, rbf_norm = 0.0;
  double frozen = 0.0;
  Csv spectrum({"variant", "instance", "index", "eigenvalue"});
  const auto p = static_cast<Eigen::Index>(k.p), d = static_cast<Eigen::Index>(k.d);
  for (std::size_t inst = 0; inst < 20; ++inst) {
    Rng rng(derive_seed(stream(c.seed, 8), inst));
    const Matrix y = gaussian_matrix(rng, p, d, 1.0 / std::sqrt(static_cast<double>(d)));
    const Matrix y2 = gaussian_matrix(rng, p, d, 1.0 / std::sqrt(static_cast<double>(d)));
    AttentionWeights w = AttentionWeights::random(k.d, rng(), 1);
    w.gamma = k.gamma;
    const Matrix q = y * w.wq, kk = y * w.wk;
    const DiscreteKernel rbf = kernel_from_projections(q, kk, KernelVariant::rbf, w.gamma);
    const MercerSpectrum s = mercer_spectrum(rbf);
    psd = std::min(psd, s.values.minCoeff() / s.values(0));
    mercer = std::max(mercer, max_abs(mercer_reconstruct(s, rbf.measure) - rbf.k_matrix));
    rbf_norm = std::max(rbf_norm, check_normalization(rbf));
    DiscreteKernel mismatched = rbf;
    mismatched.alpha =
        kernel_from_projections(y2 * w.wq, y2 * w.wk, KernelVariant::rbf, w.gamma).alpha;
    frozen = std::max(frozen, check_normalization(mismatched));
    const DiscreteKernel bil = kernel_from_projections(q, kk, KernelVariant::bilinear, w.gamma);
    const MercerSpectrum sb = mercer_spectrum(bil);
    mercer = std::max(mercer, max_abs(mercer_reconstruct(sb, bil.measure) - bil.k_matrix));
    if (inst == 0) {
      for (Eigen::Index i = 0; i < s.values.size(); ++i) spectrum.row("rbf", inst, static_cast<std::size_t>(i), s.values(i));
      for (Eigen::Index i = 0; i < sb.values.size(); ++i) spectrum.row("bilinear", inst, static_cast<std::size_t>(i), sb.values(i));
    }
  }
  out.checks.push_back(at_least("rbf_min_eigenvalue_over_max", psd, -1e-8));
  out.checks.push_back(at_most("mercer_reconstruction_error", mercer, 1e-10));
  out.checks.push_back(at_most("rbf_normalization", rbf_norm, 1e-12));

  // Positional kernels: spectral decay against gamma and the exponential
  // decay constant across grid sizes.
  Csv decay({"n", "c_hat_grid", "c_hat_feature"});
  std::vector<double> c_grid;
  const AttentionWeights pw = stability_weights(k.decay_d, stream(c.seed, 9), k.gamma);
  for (auto n : k.decay_n) {
    const Matrix x = positional_embedding(n, k.decay_d);
    const DiscreteKernel kr = kernel_from_projections(x * pw.wq, x * pw.wk, KernelVariant::rbf, k.gamma);
    const double cg = check_decay(kr, patch_centres(n), k.gamma).c_hat;
    const double cf = check_decay(kr, x, k.gamma).c_hat;
    c_grid.push_back(cg);
    decay.row(n, cg, cf);
  }
  decay.save(dir / "kernel_decay.csv", out);
  Csv ratios({"gamma", "half_over_first"});
  std::vector<double> half_ratio;
  {
    const std::size_t n = k.decay_n.empty() ? 4 : k.decay_n.front();
    const Matrix x = positional_embedding(n, k.decay_d);
    for (double g : k.spectrum_gammas) {
      const DiscreteKernel kr = kernel_from_projections(x * pw.wq, x * pw.wk, KernelVariant::rbf, g);
      const MercerSpectrum s = mercer_spectrum(kr);
      const auto half = static_cast<Eigen::Index>((s.values.size() + 1) / 2) - 1;
      half_ratio.push_back(s.values(half) / s.values(0));
      ratios.row(g, half_ratio.back());
    }
  }
  ratios.save(dir / "kernel_spectral_decay.csv", out);
  spectrum.save(dir / "spectrum.csv", out);

  const double c_lo = c_grid.empty() ? 0.0 : *std::min_element(c_grid.begin(), c_grid.end());
  const double c_hi = c_grid.empty() ? 0.0 : *std::max_element(c_grid.begin(), c_grid.end());
  out.summary["instances"] = k.instances;
  out.summary["frozen_alpha_deviation"] = frozen;
  out.summary["decay_c_hat_spread"] = c_lo > 0.0 ? c_hi / c_lo : 0.0;
  out.summary["decay_stable_within_2x"] = c_lo > 0.0 && c_hi <= 2.0 * c_lo;
  bool decreasing = true;
  for (std::size_t i = 1; i < half_ratio.size(); ++i)
    decreasing = decreasing && half_ratio[i] <= half_ratio[i - 1];
  out.summary["half_spectrum_ratio_decreasing_in_gamma"] = decreasing;
  return out;
}

// ---------------------------------------------------------------- stability

ExperimentOutput run_stability(const ExperimentConfig& c, const fs::path& dir) {
  ExperimentOutput out{"stability", {}, Json::object(), {}};
  const auto& s = c.stability;
  StabilityScanConfig sc;
  sc.n_values = s.n_values;
  sc.seeds = s.seeds;
  sc.layers = s.layers;
  sc.gamma = s.gamma;
  sc.patch_side = s.patch_side;
  sc.channels = s.channels;
  sc.variant = s.variant;
  sc.seed = stream(c.seed, 10);
  sc.image_seed = s.image_seed;
  const StabilityReport rep = verify_bound(sc);

  Csv csv({"n", "seed", "t", "drift", "sup", "bv", "rho"});
  for (const auto& r : rep.layerwise.rows) csv.row(r.n, r.seed, r.t, r.drift, r.sup, r.bv, r.rho);
  csv.save(dir / "stability.csv", out);
  Csv composed({"n", "seed", "t", "drift", "sup", "bv", "rho"});
  for (const auto& r : rep.composed.rows) composed.row(r.n, r.seed, r.t, r.drift, r.sup, r.bv, r.rho);
  composed.save(dir / "stability_composed.csv", out);

  Csv variants({"variant", "mode", "n", "median_drift", "max_rho"});
  auto emit = [&](AttentionVariant v, const char* mode, const DriftScan& scan) {
    for (std::size_t i = 0; i < s.n_values.size(); ++i)
      variants.row(to_string(v), mode, s.n_values[i], scan.median_drift[i], scan.max_rho[i]);
  };
  emit(s.variant, "layerwise", rep.layerwise);
  emit(s.variant, "composed", rep.composed);
  Json companion = Json::object();
  if (s.comparison_seeds > 0 && s.variant != AttentionVariant::symmetrized) {
    StabilityScanConfig cc = sc;
    cc.seeds = s.comparison_seeds;
    cc.variant = AttentionVariant::symmetrized;
    const StabilityReport cr = verify_bound(cc);
    emit(cc.variant, "layerwise", cr.layerwise);
    emit(cc.variant, "composed", cr.composed);
    companion = {{"variant", std::string(to_string(cc.variant))},
                 {"slope", cr.layerwise.slope},
                 {"composed_slope", cr.composed.slope},
                 {"max_rho", cr.layerwise.max_rho_all}};
  }
  variants.save(dir / "stability_variants.csv", out);

  // Near/far split of the first layer at the second grid size.
  const std::size_t n = s.n_values.size() > 1 ? s.n_values[1] : s.n_values[0];
  const TokenMatrix tok = continuum_tokens(n, s.patch_side, s.channels, s.image_seed);
  const AttentionWeights w = stability_weights(tok.y.cols(), derive_seed(derive_seed(sc.seed, 0), 0), s.gamma);
  const DiscreteKernel kr = kernel_from_projections(tok.positions * w.wq, tok.positions * w.wk,
                                                    KernelVariant::rbf, s.gamma);
  const ModulusSplit split = modulus_decomposition(tok.y, kr, n, s.near_delta);
  const Matrix total = kr.normalized() * tok.y - tok.y;
  const double additivity = max_abs(split.near + split.far - total);

  const DriftScan& scan = rep.layerwise;
  out.checks.push_back(within("drift_slope", scan.slope, -1.4, -0.6));
  out.checks.push_back(at_most("max_rho_over_median",
                               scan.median_rho_all > 0.0 ? scan.max_rho_all / scan.median_rho_all : 0.0,
                               10.0));
  out.checks.push_back(at_most("constant_field_drift", rep.constant_drift, 1e-12));
  out.checks.push_back(at_most("modulus_split_additivity", additivity, 1e-10));
  out.summary["variant"] = std::string(to_string(s.variant));
  out.summary["slope"] = scan.slope;
  out.summary["intercept"] = scan.intercept;
  out.summary["max_rho"] = scan.max_rho_all;
  out.summary["median_rho"] = scan.median_rho_all;
  out.summary["median_drift"] = scan.median_drift;
  out.summary["degenerate"] = scan.degenerate;
  out.summary["composed_slope"] = rep.composed.slope;
  out.summary["composed_median_drift"] = rep.composed.median_drift;
  out.summary["near_term"] = split.near_norm;
  out.summary["far_term"] = split.far_norm;
  out.summary["companion"] = companion;
  return out;
}

// ---------------------------------------------------------------- fredholm

ExperimentOutput run_fredholm(const ExperimentConfig& c, const fs::path& dir) {
  ExperimentOutput out{"fredholm", {}, Json::object(), {}};
  const auto& f = c.fredholm;
  Csv csv({"problem", "quantity", "value"});

  const FredholmProblem pd = pd_problem(f.p, f.d, f.beta, stream(c.seed, 11));
  const EulerLagrangeReport el = verify_euler_lagrange(pd, stream(c.seed, 12));
  const SecondKindSolution pd_solve = solve_second_kind(pd);
  csv.row("pd", "gradient_error", el.gradient_error);
  csv.row("pd", "oracle_iterations", el.oracle_iterations);
  csv.row("pd", "mismatch", el.mismatch);
  csv.row("pd", "functional_oracle", el.functional_oracle);
  csv.row("pd", "functional_solve", el.functional_solve);
  csv.row("pd", "condition", pd_solve.condition);
  csv.row("pd", "condition_bound", pd_solve.bound);

  FredholmProblem ones = pd;
  ones.k = Matrix::Ones(pd.size(), pd.size());
  ones.alpha = ones.k.rowwise().sum();
  const EulerLagrangeReport el_ones = verify_euler_lagrange(ones, stream(c.seed, 13));
  csv.row("ones", "range_dim", static_cast<std::size_t>(el_ones.range_dim));
  csv.row("ones", "mismatch", el_ones.mismatch);

  const FredholmProblem grid = rbf_grid_problem(f.grid_n, f.gamma, f.d, f.beta, stream(c.seed, 14));
  const FirstKindSolution first = solve_first_kind(grid, f.pinv_tol);
  const SecondKindSolution second = solve_second_kind(grid);
  const NoiseAmplification amp = noise_amplification(grid, f.noise, f.pinv_tol, stream(c.seed, 15));
  csv.row("rbf_grid", "first_kind_condition", first.condition);
  csv.row("rbf_grid", "first_kind_full_condition", first.full_condition);
  csv.row("rbf_grid", "first_kind_retained", static_cast<std::size_t>(first.retained));
  csv.row("rbf_grid", "first_kind_residual", first.residual);
  csv.row("rbf_grid", "second_kind_condition", second.condition);
  csv.row("rbf_grid", "second_kind_bound", second.bound);
  csv.row("rbf_grid", "amplification_first", amp.first_kind);
  csv.row("rbf_grid", "amplification_second", amp.second_kind);
  csv.row("rbf_grid", "amplification_ratio", amp.ratio);

  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  std::vector<double> betas = f.betas;
  std::sort(betas.begin(), betas.end());
  for (double b : betas) {
    FredholmProblem pb = grid;
    pb.beta = b;
    const double norm = solve_second_kind(pb).v.norm();
    csv.row("rbf_grid", "solution_norm_beta_" + format_double(b), norm);
    monotone = monotone && norm <= prev;
    prev = norm;
  }
  csv.save(dir / "fredholm.csv", out);

  out.checks.push_back(at_most("gradient_fd_error", el.gradient_error, 1e-6));
  out.checks.push_back(at_least("oracle_converged", el.oracle_converged ? 1.0 : 0.0, 1.0));
  out.checks.push_back(at_most("euler_lagrange_mismatch", el.mismatch, 1e-4));
  out.checks.push_back(at_most("condition_over_bound_pd", pd_solve.condition / pd_solve.bound, 1.05));
  out.checks.push_back(at_most("condition_over_bound_grid", second.condition / second.bound, 1.05));
  out.checks.push_back(at_least("noise_amplification_ratio", amp.ratio, 10.0));
  out.checks.push_back(at_least("monotone_regularization", monotone ? 1.0 : 0.0, 1.0));

  Json cond{{"rbf_grid", {{"first_kind_condition", first.condition},
                          {"first_kind_full_condition", first.full_condition},
                          {"retained", first.retained},
                          {"second_kind_condition", second.condition},
                          {"second_kind_bound", second.bound},
                          {"lambda_max", second.lambda_max}}},
            {"pd", {{"second_kind_condition", pd_solve.condition},
                    {"second_kind_bound", pd_solve.bound}}}};
  {
    std::ofstream cj(dir / "condition.json", std::ios::binary);
    cj << cond.dump(1) << '\n';
    out.files.push_back("condition.json");
  }
  out.summary["mismatch"] = el.mismatch;
  out.summary["singular_kernel_mismatch"] = el_ones.mismatch;
  out.summary["amplification_ratio"] = amp.ratio;
  out.summary["second_kind_shift"] = amp.second_kind_shift;
  out.summary["first_kind_condition"] = first.condition;
  return out;
}

// ---------------------------------------------------------------- interpolation

ExperimentOutput run_interpolation(const ExperimentConfig& c, const fs::path& dir) {
  ExperimentOutput out{"interpolation", {}, Json::object(), {}};
  const auto& ip = c.interpolation;
  const std::uint64_t base = stream(c.seed, 16);
  const std::size_t d = ip.patch_side * ip.patch_side * ip.channels;

  auto mask_token = [&](const TokenMatrix& t, std::uint64_t seed) -> RowVector {
    if (ip.mask_token == "mean") return t.y.colwise().mean();
    if (ip.mask_token == "random") {
      Rng rng(seed);
      return gaussian_matrix(rng, 1, t.width());
    }
    return RowVector::Zero(t.width());
  };

  struct Cell {
    double absorption = 0.0;
    RestrictedError err;
    ReconstructionBound bound;
  };
  const std::size_t nn = ip.n_values.size();
  std::vector<TokenMatrix> tokens;
  std::vector<ImageGrid> images;
  for (auto n : ip.n_values) {
    tokens.push_back(continuum_tokens(n, ip.patch_side, ip.channels, ip.image_seed));
    SyntheticParams params;
    params.channels = ip.channels;
    images.push_back(gen_synthetic(SyntheticKind::lowfreq, n * ip.patch_side, params, ip.image_seed));
  }
  std::vector<Cell> cells(nn * ip.seeds);
  par::for_each_index(cells.size(), [&](std::size_t k) {
    const std::size_t ni = k / ip.seeds, s = k % ip.seeds;
    const std::uint64_t seed = derive_seed(base, s);
    const TokenMatrix input = tokens[ni].with_positions();
    const AttentionWeights w = AttentionWeights::random(d, derive_seed(seed, 0));
    const MaskedTokenSet mt =
        build_masked_input(input, ip.mask_ratio, mask_token(input, derive_seed(seed, 1)),
                           derive_seed(seed, 2 + ip.n_values[ni]));
    cells[k].absorption = mask_absorption_decomposition(mt, w).discrepancy;
    cells[k].err = restricted_attention_error(mt, w);

    // Decoder reading patch content directly: W^V = I, identity reshape.
    AttentionWeights wv = w;
    wv.wv = Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    const TokenMatrix content = tokens[ni];
    const MaskedTokenSet cm =
        build_masked_input(content, ip.mask_ratio, mask_token(content, derive_seed(seed, 1)),
                           derive_seed(seed, 2 + ip.n_values[ni]));
    cells[k].bound = reconstruction_error_bound(
        cm, wv, images[ni], patchify(images[ni], ip.n_values[ni]));
  });

  Csv errors({"n", "seed", "error", "mass", "hull_norm"});
  Csv bounds({"n", "seed", "masked_index", "error", "bound_rhs", "ratio"});
  double absorption = 0.0;
  std::vector<double> med_err, med_c;
  for (std::size_t ni = 0; ni < nn; ++ni) {
    std::vector<double> errs, chat;
    for (std::size_t s = 0; s < ip.seeds; ++s) {
      const Cell& cell = cells[ni * ip.seeds + s];
      absorption = std::max(absorption, cell.absorption);
      const auto a = cell.err.argmax;
      errors.row(ip.n_values[ni], s, cell.err.max_error, cell.err.mass(a), cell.err.hull_norm(a));
      errs.push_back(cell.err.max_error);
      chat.push_back(cell.bound.c_hat);
      for (const auto& r : cell.bound.rows)
        if (r.masked)
          bounds.row(ip.n_values[ni], s, r.index, r.error, cell.bound.bound_rhs,
                     cell.bound.bound_rhs > 0.0 ? r.error / cell.bound.bound_rhs : 0.0);
    }
    med_err.push_back(median(errs));
    med_c.push_back(median(chat));
  }
  errors.save(dir / "interpolation_error.csv", out);
  bounds.save(dir / "interpolation_bound.csv", out);

  // Interpolation weights on small seeded problems.
  double weight_sum = 0.0, weight_min = 1.0;
  for (std::size_t k = 0; k < ip.weight_cases; ++k) {
    Rng rng(derive_seed(stream(c.seed, 17), k));
    const Matrix y = gaussian_matrix(rng, 16, 8);
    const TokenMatrix t = TokenMatrix::from_content(y, gaussian_matrix(rng, 16, 8));
    const AttentionWeights w = AttentionWeights::random(8, rng(), 1);
    const MaskedTokenSet mt = build_masked_input(t, 0.75, gaussian_matrix(rng, 1, 8), rng());
    for (auto i : mt.masked) {
      const Vector a = interpolation_weights(mt, w, i);
      weight_sum = std::max(weight_sum, std::abs(a.sum() - 1.0));
      weight_min = std::min(weight_min, a.minCoeff());
    }
  }

  bool degenerate = std::any_of(med_err.begin(), med_err.end(), [](double x) { return !(x > 0.0); });
  std::vector<double> ns(ip.n_values.begin(), ip.n_values.end());
  const double slope = degenerate ? std::numeric_limits<double>::quiet_NaN() : loglog_fit(ns, med_err).slope;
  out.checks.push_back(at_most("absorption_discrepancy", absorption, 1e-10));
  out.checks.push_back(at_most("restricted_error_slope", slope, -0.5));
  out.checks.push_back(at_most("interpolation_weight_sum_error", weight_sum, 1e-12));
  out.checks.push_back(at_least("interpolation_weight_min", weight_min, 0.0));
  const double c_lo = *std::min_element(med_c.begin(), med_c.end());
  const double c_hi = *std::max_element(med_c.begin(), med_c.end());
  out.summary["restricted_error_slope"] = slope;
  out.summary["median_error"] = med_err;
  out.summary["median_c_hat"] = med_c;
  out.summary["c_hat_within_10x"] = c_lo > 0.0 ? c_hi <= 10.0 * c_lo : c_hi == 0.0;
  out.summary["mask_token"] = ip.mask_token;
  return out;
}

// ---------------------------------------------------------------- driver

RunResult run_experiments(const ExperimentConfig& config) {
  const fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidConfiguration("cannot create output directory " + dir.string());
  apply_thread_limit();

  RunResult result;
  const std::vector<std::pair<std::string, ExperimentOutput (*)(const ExperimentConfig&, const fs::path&)>>
      table{{"bv", run_bv},           {"patchify", run_patchify},   {"lowrank", run_lowrank},
            {"kernel", run_kernel},   {"stability", run_stability}, {"fredholm", run_fredholm},
            {"interpolation", run_interpolation}};
  for (const auto& [name, fn] : table)
    if (config.experiment == "all" || config.experiment == name)
      result.experiments.push_back(fn(config, dir));

  const std::string hash = config_hash(config);
  Json summary;
  summary["version"] = kVersion;
  summary["experiment"] = config.experiment;
  summary["seed"] = config.seed;
  summary["config_hash"] = hash;
  summary["passed"] = result.passed();
  Json list = Json::array();
  for (const auto& e : result.experiments) {
    Json j;
    j["name"] = e.name;
    j["passed"] = e.passed();
    j["checks"] = checks_json(e.checks);
    j["summary"] = e.summary;
    j["files"] = e.files;
    list.push_back(j);
  }
  summary["experiments"] = list;
  {
    std::ofstream f(dir / "summary.json", std::ios::binary);
    f << summary.dump(1) << '\n';
  }
  {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ofstream f(dir / "provenance.txt", std::ios::binary);
    f << "akl " << kVersion << '\n';
    f << "experiment: " << config.experiment << '\n';
    f << "seed: " << config.seed << '\n';
    f << "config_hash: " << hash << '\n';
    f << "timestamp: " << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << '\n';
    f << "config:\n" << config_to_json(config).dump(1) << '\n';
  }
  return result;
}

}  // namespace akl
