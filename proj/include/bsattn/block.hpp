#pragma once

// Multi-head attention and a pre-norm transformer encoder block built around
// the AA / MAA / SA / LLSA kernels.
//
// Block topology (fixed):
//   h   = x + W_o MHA(LN1(x))
//   out = h + W_2 silu(W_1 LN2(h) + b_1) + b_2
// with LayerNorm eps 1e-5 and no biases on the q/k/v/o projections. In LLSA
// mode every row op (norms, projections, residuals, FFN) runs per channel and
// the attention mixes channels through the LLSA window.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bsattn/banded.hpp"
#include "bsattn/dense.hpp"
#include "bsattn/frames.hpp"
#include "bsattn/llsa.hpp"
#include "bsattn/numerics.hpp"

namespace bsattn {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// y = W x
void matvec(const Matrix& w, std::span<const double> x, std::span<double> y);
// x_grad += W^T g
void matvec_transposed_add(const Matrix& w, std::span<const double> g, std::span<double> x_grad);
// dW += g x^T
void outer_add(Matrix& dw, std::span<const double> g, std::span<const double> x);

enum class AttentionKind { aa, maa, sa, llsa };

std::string_view to_string(AttentionKind kind);
// Accepts "aa", "maa", "sa", "llsa" (any case). Throws ConfigError otherwise.
AttentionKind parse_attention_kind(std::string_view name);

struct AttentionMode {
  AttentionKind kind = AttentionKind::aa;
  std::optional<BandSpec> band;

  static AttentionMode acausal() { return {AttentionKind::aa, std::nullopt}; }
  static AttentionMode masked(BandSpec b) { return {AttentionKind::maa, b}; }
  static AttentionMode streaming(BandSpec b) { return {AttentionKind::sa, b}; }
  static AttentionMode low_latency(BandSpec b) { return {AttentionKind::llsa, b}; }

  // Band present iff the mode is banded; throws ConfigError otherwise.
  void validate() const;
  std::size_t n_channels() const { return kind == AttentionKind::llsa ? band->look_ahead + 1 : 1; }
  // Channel consumed downstream: A for LLSA, the only channel otherwise.
  std::size_t designated_channel() const { return n_channels() - 1; }
  std::string describe() const;
};

struct BlockParams {
  std::size_t model_dim = 0;
  std::size_t n_heads = 0;
  std::size_t ffn_dim = 0;

  Matrix w_q, w_k, w_v, w_o;
  std::vector<double> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Matrix ffn_w1, ffn_w2;
  std::vector<double> ffn_b1, ffn_b2;

  std::size_t head_dim() const { return model_dim / n_heads; }
  // Throws ConfigError on zero sizes, model_dim % n_heads != 0 or tensors
  // whose shapes disagree with the declared sizes; ArgumentError on
  // non-finite parameters.
  void validate() const;

  static BlockParams zeros(std::size_t model_dim, std::size_t n_heads, std::size_t ffn_dim);
  // Projections ~ N(0, 1/fan_in), unit gains, zero biases.
  static BlockParams random(std::size_t model_dim, std::size_t n_heads, std::size_t ffn_dim, Rng& rng);

  // f(name, dims, values) for every tensor, in a fixed order.
  template <typename F>
  void for_each_tensor(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& p, F& f) {
    auto mat = [&](const char* name, auto& m) {
      f(std::string(name), std::vector<std::size_t>{m.rows, m.cols}, std::span(m.data));
    };
    auto vec = [&](const char* name, auto& v) {
      f(std::string(name), std::vector<std::size_t>{v.size()}, std::span(v));
    };
    mat("w_q", p.w_q);
    mat("w_k", p.w_k);
    mat("w_v", p.w_v);
    mat("w_o", p.w_o);
    vec("ln1.gain", p.ln1_gain);
    vec("ln1.bias", p.ln1_bias);
    vec("ln2.gain", p.ln2_gain);
    vec("ln2.bias", p.ln2_bias);
    mat("ffn.w1", p.ffn_w1);
    vec("ffn.b1", p.ffn_b1);
    mat("ffn.w2", p.ffn_w2);
    vec("ffn.b2", p.ffn_b2);
  }
};

// dst += scale * src, tensor by tensor.
void add_scaled(BlockParams& dst, double scale, const BlockParams& src);

// Frame-local projections of x (no normalization), split into heads of
// head_dim. Throws ConfigError when x.dim != model_dim or the head split is
// invalid.
std::vector<AttentionInputs> project_qkv(const FrameSequence& x, const BlockParams& params);

// Projection + attention + head merge (no W_o, no norms). For LLSA the input
// is channelized and the designated channel returned.
FrameSequence multi_head_attention(const FrameSequence& x, const BlockParams& params,
                                   const AttentionMode& mode);

// Row-level pieces shared by the offline block and the streaming runtime.
struct ProjectedRow {
  std::vector<double> xhat;    // LN1 normalized input
  double rstd = 0.0;
  std::vector<double> normed;  // gain * xhat + bias
  std::vector<double> q, k, v;  // all heads, concatenated
};

struct FinishedRow {
  std::vector<double> h;  // x + W_o merged
  std::vector<double> xhat2;
  double rstd2 = 0.0;
  std::vector<double> normed2;
  std::vector<double> pre_act;  // W_1 normed2 + b_1
  std::vector<double> act;      // silu(pre_act)
  std::vector<double> out;
};

void block_project_row(const BlockParams& params, std::span<const double> x, ProjectedRow& out);
void block_finish_row(const BlockParams& params, std::span<const double> x,
                      std::span<const double> merged, FinishedRow& out);

struct HeadCache {
  std::variant<AttentionInputs, LlsaInputs> inputs;
  std::variant<std::monostate, DenseScoreCache<double>, BandedScores<double>, LlsaScores> scores;
};

struct BlockCache {
  AttentionMode mode;
  ChanneledSequence input;
  std::vector<ProjectedRow> projected;  // index t * n_channels + c
  std::vector<HeadCache> heads;
  ChanneledSequence merged;
  std::vector<FinishedRow> finished;
  bool valid = false;
};

struct BlockForwardResult {
  ChanneledSequence output;
  BlockCache cache;
};

// x must carry mode.n_channels() channels.
BlockForwardResult encoder_block_forward(const ChanneledSequence& x, const BlockParams& params,
                                         const AttentionMode& mode);
// Plain-sequence convenience: channelizes for LLSA and returns the
// designated channel.
FrameSequence encoder_block_forward(const FrameSequence& x, const BlockParams& params,
                                    const AttentionMode& mode);

struct BlockBackwardResult {
  ChanneledSequence d_input;
  BlockParams d_params;
};

// Throws StateError when the cache is missing or does not match params.
BlockBackwardResult encoder_block_backward(const BlockParams& params, const BlockCache& cache,
                                           const ChanneledSequence& d_output);

// pe(t, 2i) = sin(t / 10000^(2i/d)), pe(t, 2i+1) = cos(t / 10000^(2i/d)).
void add_positional_encoding_row(std::size_t t, std::span<double> row);
void add_positional_encoding(FrameSequence& x, std::size_t first_index = 0);

struct EncoderStack {
  std::vector<BlockParams> blocks;
  bool positional_encoding = true;

  std::size_t n_layers() const { return blocks.size(); }
  std::size_t model_dim() const { return blocks.empty() ? 0 : blocks.front().model_dim; }
  void validate() const;

  static EncoderStack random(std::size_t n_layers, std::size_t model_dim, std::size_t n_heads,
                             std::size_t ffn_dim, std::uint64_t seed);
};

struct StackForwardResult {
  FrameSequence output;        // designated channel of the last block
  ChanneledSequence channels;  // every channel of the last block
  std::vector<BlockCache> caches;
};

StackForwardResult stack_forward(const EncoderStack& stack, const FrameSequence& x,
                                 const AttentionMode& mode);

struct StackBackwardResult {
  FrameSequence d_input;
  std::vector<BlockParams> d_blocks;
};

// Gradient of <d_output, stack_forward(...).output>.
StackBackwardResult stack_backward(const EncoderStack& stack, const StackForwardResult& forward,
                                   const FrameSequence& d_output);

}  // namespace bsattn
