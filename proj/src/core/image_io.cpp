#include "core/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"

namespace monofbf {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// Next whitespace-delimited PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw IoError("truncated PGM header in " + path.string());
  return tok;
}

std::size_t parse_positive(const std::string& tok, const std::filesystem::path& path) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || v == 0) throw IoError("bad header field '" + tok + "' in " + path.string());
  return static_cast<std::size_t>(v);
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (pgm_token(in, path) != "P5") throw IoError("not a binary PGM (P5): " + path.string());
  const std::size_t width = parse_positive(pgm_token(in, path), path);
  const std::size_t height = parse_positive(pgm_token(in, path), path);
  const std::size_t maxval = parse_positive(pgm_token(in, path), path);
  if (maxval > 255) throw IoError("only 8-bit PGM is supported: " + path.string());
  std::vector<unsigned char> buf(width * height);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw IoError("truncated PGM payload: " + path.string());
  Image img(height, width);
  for (std::size_t i = 0; i < buf.size(); ++i) img.tensor()[i] = static_cast<double>(buf[i]) / static_cast<double>(maxval);
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  auto out = open_out(path);
  out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<unsigned char> buf(image.tensor().size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double v = std::clamp(image.tensor()[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(255.0 * v));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_f32t(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "F32T") throw IoError("missing F32T magic: " + path.string());
  if (!std::getline(in, line)) throw IoError("missing F32T shape line: " + path.string());
  std::istringstream ls(line);
  std::size_t ndim = 0;
  if (!(ls >> ndim) || ndim == 0) throw IoError("bad F32T shape line: " + path.string());
  Shape shape(ndim);
  for (auto& d : shape) {
    if (!(ls >> d) || d == 0) throw IoError("bad F32T dimension: " + path.string());
  }
  std::vector<std::uint32_t> raw(shape_size(shape));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (static_cast<std::size_t>(in.gcount()) != raw.size() * 4) throw IoError("truncated F32T payload: " + path.string());
  std::vector<double> data(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::uint32_t bits = to_little_endian(raw[i]);
    float f;
    std::memcpy(&f, &bits, 4);
    data[i] = static_cast<double>(f);
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_f32t(const std::filesystem::path& path, const Tensor& tensor) {
  auto out = open_out(path);
  out << "F32T\n" << tensor.ndim();
  for (std::size_t d : tensor.shape()) out << ' ' << d;
  out << '\n';
  std::vector<std::uint32_t> raw(tensor.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float f = static_cast<float>(tensor[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    raw[i] = to_little_endian(bits);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  char magic[4] = {};
  {
    auto in = open_in(path);
    in.read(magic, 4);
  }
  if (std::memcmp(magic, "F32T", 4) == 0) return read_f32t(path);
  if (magic[0] == 'P' && magic[1] == '5') return read_pgm(path).tensor();
  throw IoError("unrecognized image format: " + path.string());
}

Image read_image_file(const std::filesystem::path& path) { return Image(read_tensor_file(path)); }

bool is_image_file(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return ext == ".pgm" || ext == ".f32t";
}

}  // namespace monofbf
