#include "bsattn/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "bsattn/errors.hpp"

namespace bsattn {

namespace {

constexpr std::size_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> b{};
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), b.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> b{};
  in.read(reinterpret_cast<char*>(b.data()), b.size());
  if (in.gcount() != static_cast<std::streamsize>(b.size()))
    throw FormatError(std::string("truncated input while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

void put_value(std::ostream& out, double v, Precision p) {
  if (p == Precision::f64)
    put_le(out, std::bit_cast<std::uint64_t>(v));
  else
    put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

double get_value(std::istream& in, Precision p) {
  if (p == Precision::f64) return std::bit_cast<double>(get_le<std::uint64_t>(in, "value"));
  return static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, "value")));
}

void expect_magic(std::istream& in, const char* magic) {
  char got[4] = {};
  in.read(got, 4);
  if (in.gcount() != 4 || std::memcmp(got, magic, 4) != 0)
    throw FormatError(std::string("bad magic, expected ") + magic);
}

Precision precision_flag(std::uint8_t raw) {
  if (raw == 4) return Precision::f32;
  if (raw == 8) return Precision::f64;
  throw FormatError("unsupported precision flag " + std::to_string(raw));
}

std::uint64_t element_count(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d)
      throw FormatError("tensor size overflows");
    n *= d;
  }
  return n;
}

std::vector<double> read_values(std::istream& in, std::uint64_t count, Precision p) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) v.push_back(get_value(in, p));
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  return in;
}

}  // namespace

Precision parse_precision(std::string_view name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw ConfigError("unknown precision '" + std::string(name) + "' (expected f32 or f64)");
}

std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name) {
  auto it = std::ranges::find(tensors, name, &NamedTensor::name);
  if (it == tensors.end()) throw FormatError("checkpoint has no tensor '" + std::string(name) + "'");
  return *it;
}

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors, Precision precision) {
  out.write("BSAT", 4);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint8_t>(out, 0);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(precision));
  for (const auto& t : tensors) {
    if (t.name.size() > kMaxNameLength) throw ArgumentError("tensor name too long: " + t.name);
    if (element_count(t.dims) != t.values.size())
      throw ArgumentError("tensor " + t.name + ": dims disagree with value count");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint64_t>(out, d);
    for (double v : t.values) put_value(out, v, precision);
  }
  if (!out) throw FormatError("write failed");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  expect_magic(in, "BSAT");
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kFormatVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto endian = get_le<std::uint8_t>(in, "endianness flag");
  if (endian != 0) throw FormatError("unsupported endianness flag " + std::to_string(endian));
  const Precision p = precision_flag(get_le<std::uint8_t>(in, "precision flag"));

  std::vector<NamedTensor> tensors;
  while (in.peek() != std::char_traits<char>::eof()) {
    NamedTensor t;
    const auto len = get_le<std::uint32_t>(in, "name length");
    if (len > kMaxNameLength) throw FormatError("tensor name length " + std::to_string(len) + " too large");
    t.name.resize(len);
    in.read(t.name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw FormatError("truncated tensor name");
    const auto rank = get_le<std::uint32_t>(in, "rank");
    if (rank > kMaxRank) throw FormatError("tensor " + t.name + ": rank " + std::to_string(rank) + " too large");
    for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(get_le<std::uint64_t>(in, "dims"));
    t.values = read_values(in, element_count(t.dims), p);
    tensors.push_back(std::move(t));
  }
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                     Precision precision) {
  auto out = open_out(path);
  write_checkpoint(out, tensors, precision);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_checkpoint(in);
}

std::vector<NamedTensor> stack_tensors(const EncoderStack& stack, const std::string& prefix) {
  stack.validate();
  const auto& b0 = stack.blocks.front();
  std::vector<NamedTensor> out;
  out.push_back({prefix + "meta",
                 {5},
                 {static_cast<double>(stack.n_layers()), static_cast<double>(b0.model_dim),
                  static_cast<double>(b0.n_heads), static_cast<double>(b0.ffn_dim),
                  stack.positional_encoding ? 1.0 : 0.0}});
  for (std::size_t l = 0; l < stack.n_layers(); ++l) {
    stack.blocks[l].for_each_tensor(
        [&](const std::string& name, const std::vector<std::size_t>& dims, std::span<const double> v) {
          out.push_back({prefix + "block" + std::to_string(l) + "." + name,
                         std::vector<std::uint64_t>(dims.begin(), dims.end()),
                         std::vector<double>(v.begin(), v.end())});
        });
  }
  return out;
}

EncoderStack stack_from_tensors(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  const auto& meta = find_tensor(tensors, prefix + "meta");
  if (meta.values.size() != 5) throw FormatError("stack meta tensor must hold 5 values");
  auto count = [&](std::size_t i) {
    const double v = meta.values[i];
    if (!(v >= 0.0 && v <= 1e9) || v != std::floor(v)) throw FormatError("bad stack meta value");
    return static_cast<std::size_t>(v);
  };
  const std::size_t n_layers = count(0);
  EncoderStack stack;
  stack.positional_encoding = count(4) != 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    BlockParams p = BlockParams::zeros(count(1), count(2), count(3));
    p.for_each_tensor([&](const std::string& name, const std::vector<std::size_t>& dims, std::span<double> v) {
      const auto& t = find_tensor(tensors, prefix + "block" + std::to_string(l) + "." + name);
      if (!std::ranges::equal(t.dims, dims) || t.values.size() != v.size())
        throw FormatError("tensor " + t.name + " has the wrong shape");
      std::ranges::copy(t.values, v.begin());
    });
    stack.blocks.push_back(std::move(p));
  }
  try {
    stack.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint holds an invalid stack: ") + e.what());
  }
  return stack;
}

void write_frames(std::ostream& out, const FrameSequence& x, Precision precision) {
  out.write("BSAF", 4);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, x.n_frames());
  put_le<std::uint64_t>(out, x.dim());
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(precision));
  for (double v : x.values()) put_value(out, v, precision);
  if (!out) throw FormatError("write failed");
}

FrameSequence read_frames(std::istream& in) {
  expect_magic(in, "BSAF");
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kFormatVersion) throw FormatError("unsupported matrix version " + std::to_string(version));
  const auto n = get_le<std::uint64_t>(in, "n_frames");
  const auto d = get_le<std::uint64_t>(in, "dim");
  const Precision p = precision_flag(get_le<std::uint8_t>(in, "precision flag"));
  if (n == 0 || d == 0) throw FormatError("matrix file has an empty shape");
  auto values = read_values(in, element_count({n, d}), p);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after matrix data");
  return FrameSequence(static_cast<std::size_t>(n), static_cast<std::size_t>(d), std::move(values));
}

void save_frames(const std::filesystem::path& path, const FrameSequence& x, Precision precision) {
  auto out = open_out(path);
  write_frames(out, x, precision);
}

FrameSequence load_frames(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_frames(in);
}

}  // namespace bsattn
