#include "akl/bundle.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "akl/image_io.hpp"

namespace akl {

void Bundle::put(const std::string& name, Matrix m) {
  for (auto& [k, v] : matrices)
    if (k == name) {
      v = std::move(m);
      return;
    }
  matrices.emplace_back(name, std::move(m));
}

void Bundle::put_scalar(const std::string& name, double v) {
  for (auto& [k, x] : scalars)
    if (k == name) {
      x = v;
      return;
    }
  scalars.emplace_back(name, v);
}

const Matrix& Bundle::matrix(const std::string& name) const {
  for (const auto& [k, v] : matrices)
    if (k == name) return v;
  throw InvalidInput("bundle: missing matrix '" + name + "'");
}

double Bundle::scalar(const std::string& name) const {
  for (const auto& [k, v] : scalars)
    if (k == name) return v;
  throw InvalidInput("bundle: missing scalar '" + name + "'");
}

bool operator==(const Bundle& a, const Bundle& b) {
  if (a.scalars != b.scalars || a.matrices.size() != b.matrices.size()) return false;
  for (std::size_t i = 0; i < a.matrices.size(); ++i) {
    const auto& [ka, ma] = a.matrices[i];
    const auto& [kb, mb] = b.matrices[i];
    if (ka != kb || ma.rows() != mb.rows() || ma.cols() != mb.cols() || ma != mb)
      return false;
  }
  return true;
}

std::string bundle_to_json(const Bundle& b) {
  nlohmann::ordered_json j;
  j["format"] = "akl-bundle";
  j["scalars"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : b.scalars) j["scalars"][k] = v;
  j["matrices"] = nlohmann::ordered_json::object();
  for (const auto& [k, m] : b.matrices) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    j["matrices"][k] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  }
  return j.dump(1) + "\n";
}

Bundle bundle_from_json(const std::string& text) {
  Bundle b;
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    if (j.at("format") != "akl-bundle") throw InvalidInput("bundle: wrong format tag");
    for (const auto& [k, v] : j.at("scalars").items()) b.put_scalar(k, v.get<double>());
    for (const auto& [k, v] : j.at("matrices").items()) {
      const auto rows = v.at("rows").get<Eigen::Index>();
      const auto cols = v.at("cols").get<Eigen::Index>();
      const auto data = v.at("data").get<std::vector<double>>();
      if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw InvalidInput("bundle: shape header does not match data for '" + k + "'");
      Matrix m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
          m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
      b.put(k, std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("bundle: ") + e.what());
  }
  return b;
}

std::string bundle_to_csv(const Bundle& b) {
  std::ostringstream out;
  for (const auto& [k, v] : b.scalars) out << "# scalar " << k << ' ' << format_double(v) << '\n';
  for (const auto& [k, m] : b.matrices) {
    out << "# matrix " << k << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c) out << ',';
        out << format_double(m(r, c));
      }
      out << '\n';
    }
  }
  return out.str();
}

Bundle bundle_from_csv(const std::string& text) {
  Bundle b;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream hdr(line);
    std::string hash, kind, name;
    hdr >> hash >> kind >> name;
    if (hash != "#" || name.empty()) throw InvalidInput("bundle csv: expected header, got '" + line + "'");
    if (kind == "scalar") {
      std::string v;
      std::string extra;
      hdr >> v;
      const auto vals = parse_csv_doubles(v);
      if (vals.size() != 1 || (hdr >> extra)) throw InvalidInput("bundle csv: bad scalar '" + name + "'");
      b.put_scalar(name, vals[0]);
    } else if (kind == "matrix") {
      Eigen::Index rows = -1, cols = -1;
      std::string extra;
      hdr >> rows >> cols;
      if (!hdr || rows < 0 || cols < 0 || (hdr >> extra)) throw InvalidInput("bundle csv: bad shape for '" + name + "'");
      Matrix m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw InvalidInput("bundle csv: truncated '" + name + "'");
        const auto vals = parse_csv_doubles(line);
        if (static_cast<Eigen::Index>(vals.size()) != cols)
          throw InvalidInput("bundle csv: row width mismatch in '" + name + "'");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = vals[static_cast<std::size_t>(c)];
      }
      b.put(name, std::move(m));
    } else {
      throw InvalidInput("bundle csv: unknown entry kind '" + kind + "'");
    }
  }
  return b;
}

void write_bundle(const Bundle& b, const std::filesystem::path& path) {
  const auto ext = path.extension();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  if (ext == ".json")
    out << bundle_to_json(b);
  else if (ext == ".csv")
    out << bundle_to_csv(b);
  else
    throw InvalidInput("bundle: unsupported extension " + ext.string());
}

Bundle read_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto ext = path.extension();
  if (ext == ".json") return bundle_from_json(ss.str());
  if (ext == ".csv") return bundle_from_csv(ss.str());
  throw InvalidInput("bundle: unsupported extension " + ext.string());
}

namespace {

Matrix as_column(const Vector& v) { return v; }

}  // namespace

Bundle to_bundle(const AttentionWeights& w) {
  Bundle b;
  b.put_scalar("gamma", w.gamma);
  b.put("wq", w.wq);
  b.put("wk", w.wk);
  b.put("wv", w.wv);
  b.put("ln_scale", as_column(w.ln_scale));
  b.put("ln_shift", as_column(w.ln_shift));
  b.put("ffn_w1", w.ffn.w1);
  b.put("ffn_b1", as_column(w.ffn.b1));
  b.put("ffn_w2", w.ffn.w2);
  b.put("ffn_b2", as_column(w.ffn.b2));
  return b;
}

AttentionWeights weights_from_bundle(const Bundle& b) {
  AttentionWeights w;
  w.gamma = b.scalar("gamma");
  w.wq = b.matrix("wq");
  w.wk = b.matrix("wk");
  w.wv = b.matrix("wv");
  w.ln_scale = b.matrix("ln_scale").col(0);
  w.ln_shift = b.matrix("ln_shift").col(0);
  w.ffn.w1 = b.matrix("ffn_w1");
  w.ffn.b1 = b.matrix("ffn_b1").col(0);
  w.ffn.w2 = b.matrix("ffn_w2");
  w.ffn.b2 = b.matrix("ffn_b2").col(0);
  w.validate();
  return w;
}

Bundle to_bundle(const TokenMatrix& t) {
  Bundle b;
  b.put("y", t.y);
  b.put("positions", t.positions);
  Matrix ids(static_cast<Eigen::Index>(t.patch_ids.size()), 1);
  for (std::size_t i = 0; i < t.patch_ids.size(); ++i)
    ids(static_cast<Eigen::Index>(i), 0) = static_cast<double>(t.patch_ids[i]);
  b.put("patch_ids", ids);
  return b;
}

TokenMatrix tokens_from_bundle(const Bundle& b) {
  TokenMatrix t{b.matrix("y"), b.matrix("positions"), {}};
  const Matrix& ids = b.matrix("patch_ids");
  for (Eigen::Index i = 0; i < ids.rows(); ++i) {
    const double v = ids(i, 0);
    if (!(v >= 0.0) || v != std::floor(v)) throw InvalidInput("bundle: bad patch id");
    t.patch_ids.push_back(static_cast<std::size_t>(v));
  }
  t.validate();
  return t;
}

Bundle to_bundle(const FredholmProblem& prob) {
  Bundle b;
  b.put_scalar("beta", prob.beta);
  b.put("k", prob.k);
  b.put("alpha", as_column(prob.alpha));
  b.put("mu", as_column(prob.mu));
  b.put("z", prob.z);
  return b;
}

FredholmProblem problem_from_bundle(const Bundle& b) {
  FredholmProblem prob{b.matrix("k"), b.matrix("alpha").col(0), b.matrix("mu").col(0),
                       b.matrix("z"), b.scalar("beta")};
  prob.validate();
  return prob;
}

}  // namespace akl
