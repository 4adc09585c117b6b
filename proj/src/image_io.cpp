#include "akl/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace akl {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<double> parse_csv_doubles(const std::string& line) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    auto comma = line.find(',', pos);
    if (comma == std::string::npos) comma = line.size();
    std::string field = line.substr(pos, comma - pos);
    field.erase(0, field.find_first_not_of(" \t\r"));
    field.erase(field.find_last_not_of(" \t\r") + 1);
    if (field.empty()) throw InvalidInput("csv: empty field");
    double v = 0.0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size())
      throw InvalidInput("csv: cannot parse '" + field + "'");
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

ImageGrid read_image_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rows.push_back(parse_csv_doubles(line));
  }
  const std::size_t n = rows.size();
  if (n < 2) throw InvalidInput("image csv: need at least 2 rows");
  const std::size_t width = rows.front().size();
  if (width % n != 0) throw InvalidInput("image csv: ragged or non-square");
  const std::size_t c = width / n;
  std::vector<double> pixels;
  pixels.reserve(n * width);
  for (const auto& r : rows) {
    if (r.size() != width) throw InvalidInput("image csv: ragged rows");
    pixels.insert(pixels.end(), r.begin(), r.end());
  }
  ImageGrid img(n, c, std::move(pixels));
  img.require_finite();
  return img;
}

void write_image_csv(const ImageGrid& img, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  const auto width = img.side() * img.channels();
  for (std::size_t r = 0; r < img.side(); ++r) {
    for (std::size_t k = 0; k < width; ++k) {
      if (k) out << ',';
      out << format_double(img.pixels()[r * width + k]);
    }
    out << '\n';
  }
}

ImageGrid read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  const std::string magic = next_token(in);
  std::size_t channels = 0;
  bool binary = false;
  if (magic == "P5") channels = 1, binary = true;
  else if (magic == "P6") channels = 3, binary = true;
  else if (magic == "P2") channels = 1;
  else if (magic == "P3") channels = 3;
  else throw InvalidInput("netpbm: unsupported magic '" + magic + "'");
  const auto width = std::stoul(next_token(in));
  const auto height = std::stoul(next_token(in));
  const auto maxval = std::stoul(next_token(in));
  if (width != height) throw InvalidInput("netpbm: image must be square");
  if (maxval == 0 || maxval > 255) throw InvalidInput("netpbm: only 8-bit supported");
  const std::size_t count = width * height * channels;
  std::vector<double> pixels(count);
  if (binary) {
    std::vector<unsigned char> raw(count);
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count)
      throw InvalidInput("netpbm: truncated pixel data");
    for (std::size_t i = 0; i < count; ++i)
      pixels[i] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
  } else {
    for (std::size_t i = 0; i < count; ++i)
      pixels[i] = std::stod(next_token(in)) / static_cast<double>(maxval);
  }
  return ImageGrid(width, channels, std::move(pixels));
}

void write_netpbm(const ImageGrid& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << (img.channels() == 1 ? "P5" : "P6") << '\n'
      << img.side() << ' ' << img.side() << "\n255\n";
  for (double v : img.pixels()) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    out.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
}

ImageGrid read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return read_image_csv(path);
  if (ext == ".pgm" || ext == ".ppm") return read_netpbm(path);
  throw InvalidInput("unknown image extension '" + ext + "'");
}

void write_image(const ImageGrid& img, const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return write_image_csv(img, path);
  if (ext == ".pgm" || ext == ".ppm") {
    if ((ext == ".pgm") != (img.channels() == 1))
      throw InvalidInput("pgm holds 1 channel, ppm holds 3");
    return write_netpbm(img, path);
  }
  throw InvalidInput("unknown image extension '" + ext + "'");
}

}  // namespace akl
