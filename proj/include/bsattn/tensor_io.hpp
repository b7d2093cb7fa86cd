#pragma once

// Binary formats, all little-endian regardless of host.
//
// Checkpoint ("BSAT"):
//   magic "BSAT" | u32 version (1) | u8 endianness (0 = little) |
//   u8 precision (bytes per value: 4 or 8)
//   then until end of file, per tensor:
//   u32 name length | name bytes | u32 rank | u64 dims[rank] | values
//
// Frame matrix ("BSAF"):
//   magic "BSAF" | u32 version (1) | u64 n_frames | u64 dim |
//   u8 precision (4 or 8) | n_frames * dim values, row-major

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bsattn/block.hpp"
#include "bsattn/frames.hpp"

namespace bsattn {

enum class Precision : std::uint8_t { f32 = 4, f64 = 8 };

Precision parse_precision(std::string_view name);  // "f32" | "f64"
std::string_view to_string(Precision p);

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name);

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors, Precision precision);
// Throws FormatError on bad magic, version, flags, truncation or a value
// count that disagrees with the dims.
std::vector<NamedTensor> read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                     Precision precision);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

// Tensors "<prefix>meta" = {n_layers, model_dim, n_heads, ffn_dim, pe} and
// "<prefix>block<l>.<name>" for every block tensor.
std::vector<NamedTensor> stack_tensors(const EncoderStack& stack, const std::string& prefix = "");
EncoderStack stack_from_tensors(const std::vector<NamedTensor>& tensors, const std::string& prefix = "");

void write_frames(std::ostream& out, const FrameSequence& x, Precision precision);
FrameSequence read_frames(std::istream& in);
void save_frames(const std::filesystem::path& path, const FrameSequence& x, Precision precision);
FrameSequence load_frames(const std::filesystem::path& path);

}  // namespace bsattn
