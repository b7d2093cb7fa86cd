#include "bsattn/block.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "bsattn/detail/kernels.hpp"

namespace bsattn {

namespace {

constexpr double kNormEps = 1e-5;

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

void layer_norm(std::span<const double> x, std::span<const double> gain,
                std::span<const double> bias, std::vector<double>& xhat, double& rstd,
                std::vector<double>& y) {
  const std::size_t d = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  rstd = 1.0 / std::sqrt(var + kNormEps);
  xhat.resize(d);
  y.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    xhat[i] = (x[i] - mean) * rstd;
    y[i] = gain[i] * xhat[i] + bias[i];
  }
}

// dx += LN backward; accumulates gain/bias gradients.
void layer_norm_backward(std::span<const double> dy, std::span<const double> xhat, double rstd,
                         std::span<const double> gain, std::span<double> d_gain,
                         std::span<double> d_bias, std::span<double> dx) {
  const std::size_t d = dy.size();
  double mean_dxhat = 0.0;
  double mean_dxhat_xhat = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double g = dy[i] * gain[i];
    d_gain[i] += dy[i] * xhat[i];
    d_bias[i] += dy[i];
    mean_dxhat += g;
    mean_dxhat_xhat += g * xhat[i];
  }
  mean_dxhat /= static_cast<double>(d);
  mean_dxhat_xhat /= static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double g = dy[i] * gain[i];
    dx[i] += rstd * (g - mean_dxhat - xhat[i] * mean_dxhat_xhat);
  }
}

void check_finite(std::span<const double> v, const std::string& name) {
  for (double x : v)
    if (!std::isfinite(x)) throw ArgumentError("BlockParams: non-finite value in " + name);
}

// Attention over projected rows, one kernel call per head; merges heads.
ChanneledSequence run_heads(const std::vector<ProjectedRow>& rows, std::size_t n,
                            std::size_t channels, const BlockParams& p, const AttentionMode& mode,
                            std::vector<HeadCache>* caches) {
  const std::size_t hd = p.head_dim();
  ChanneledSequence merged(n, channels, p.model_dim);
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    const std::size_t off = h * hd;
    if (mode.kind == AttentionKind::llsa) {
      LlsaInputs in{ChanneledSequence(n, channels, hd), ChanneledSequence(n, channels, hd),
                    ChanneledSequence(n, channels, hd)};
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < channels; ++c) {
          const ProjectedRow& r = rows[t * channels + c];
          std::copy_n(r.q.begin() + off, hd, in.queries.at(t, c).begin());
          std::copy_n(r.k.begin() + off, hd, in.keys.at(t, c).begin());
          std::copy_n(r.v.begin() + off, hd, in.values.at(t, c).begin());
        }
      }
      LlsaForwardResult res = llsa_forward(in, *mode.band);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < channels; ++c)
          std::ranges::copy(res.output.at(t, c), merged.at(t, c).begin() + off);
      if (caches) caches->push_back(HeadCache{std::move(in), std::move(res.scores)});
      continue;
    }

    AttentionInputs in{FrameSequence(n, hd), FrameSequence(n, hd), FrameSequence(n, hd)};
    for (std::size_t t = 0; t < n; ++t) {
      const ProjectedRow& r = rows[t];
      std::copy_n(r.q.begin() + off, hd, in.queries.row(t).begin());
      std::copy_n(r.k.begin() + off, hd, in.keys.row(t).begin());
      std::copy_n(r.v.begin() + off, hd, in.values.row(t).begin());
    }
    FrameSequence out;
    HeadCache cache{AttentionInputs{}, std::monostate{}};
    switch (mode.kind) {
      case AttentionKind::aa: {
        auto res = aa_forward_with_cache(in);
        out = std::move(res.output);
        cache.scores = std::move(res.cache);
        break;
      }
      case AttentionKind::maa: {
        auto res = maa_forward(in, build_band_mask(n, *mode.band));
        out = std::move(res.output);
        cache.scores = std::move(res.cache);
        break;
      }
      case AttentionKind::sa: {
        auto res = sa_forward(in, *mode.band);
        out = std::move(res.output);
        cache.scores = std::move(res.scores);
        break;
      }
      case AttentionKind::llsa:
        break;
    }
    for (std::size_t t = 0; t < n; ++t) std::ranges::copy(out.row(t), merged.at(t, 0).begin() + off);
    if (caches) {
      cache.inputs = std::move(in);
      caches->push_back(std::move(cache));
    }
  }
  return merged;
}

}  // namespace

void matvec(const Matrix& w, std::span<const double> x, std::span<double> y) {
  // Four rows at a time for instruction-level parallelism; each row still
  // sums in index order, so results equal dot_sequential row by row.
  std::size_t r = 0;
  for (; r + 4 <= w.rows; r += 4) {
    const double* w0 = w.data.data() + r * w.cols;
    const double* w1 = w0 + w.cols;
    const double* w2 = w1 + w.cols;
    const double* w3 = w2 + w.cols;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) {
      s0 += w0[c] * x[c];
      s1 += w1[c] * x[c];
      s2 += w2[c] * x[c];
      s3 += w3[c] * x[c];
    }
    y[r] = s0;
    y[r + 1] = s1;
    y[r + 2] = s2;
    y[r + 3] = s3;
  }
  for (; r < w.rows; ++r) y[r] = detail::dot_sequential(w.row(r).data(), x.data(), w.cols);
}

void matvec_transposed_add(const Matrix& w, std::span<const double> g, std::span<double> x_grad) {
  for (std::size_t r = 0; r < w.rows; ++r) detail::axpy(g[r], w.row(r).data(), x_grad.data(), w.cols);
}

void outer_add(Matrix& dw, std::span<const double> g, std::span<const double> x) {
  for (std::size_t r = 0; r < dw.rows; ++r) detail::axpy(g[r], x.data(), dw.data.data() + r * dw.cols, dw.cols);
}

std::string_view to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::aa: return "aa";
    case AttentionKind::maa: return "maa";
    case AttentionKind::sa: return "sa";
    case AttentionKind::llsa: return "llsa";
  }
  return "?";
}

AttentionKind parse_attention_kind(std::string_view name) {
  std::string lower(name);
  std::ranges::transform(lower, lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "aa") return AttentionKind::aa;
  if (lower == "maa") return AttentionKind::maa;
  if (lower == "sa") return AttentionKind::sa;
  if (lower == "llsa") return AttentionKind::llsa;
  throw ConfigError("unknown attention mode '" + std::string(name) + "' (expected aa, maa, sa, llsa)");
}

void AttentionMode::validate() const {
  const bool banded = kind != AttentionKind::aa;
  if (banded && !band)
    throw ConfigError(std::string("attention mode ") + std::string(to_string(kind)) + " requires a band");
  if (!banded && band) throw ConfigError("attention mode aa takes no band");
}

std::string AttentionMode::describe() const {
  std::string s(to_string(kind));
  if (band) s += "(B=" + std::to_string(band->look_back) + ",A=" + std::to_string(band->look_ahead) + ")";
  return s;
}

void BlockParams::validate() const {
  if (model_dim == 0 || n_heads == 0 || ffn_dim == 0)
    throw ConfigError("BlockParams: model_dim, n_heads and ffn_dim must be >= 1");
  if (model_dim % n_heads != 0)
    throw ConfigError("BlockParams: model_dim " + std::to_string(model_dim) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  auto want = [&](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
    if (m.rows != r || m.cols != c || m.data.size() != r * c)
      throw ConfigError(std::string("BlockParams: bad shape for ") + name);
  };
  want(w_q, model_dim, model_dim, "w_q");
  want(w_k, model_dim, model_dim, "w_k");
  want(w_v, model_dim, model_dim, "w_v");
  want(w_o, model_dim, model_dim, "w_o");
  want(ffn_w1, ffn_dim, model_dim, "ffn.w1");
  want(ffn_w2, model_dim, ffn_dim, "ffn.w2");
  for (const auto* v : {&ln1_gain, &ln1_bias, &ln2_gain, &ln2_bias, &ffn_b2})
    if (v->size() != model_dim) throw ConfigError("BlockParams: bad norm/bias length");
  if (ffn_b1.size() != ffn_dim) throw ConfigError("BlockParams: bad ffn.b1 length");
  for_each_tensor([](const std::string& name, const std::vector<std::size_t>&, std::span<const double> v) {
    check_finite(v, name);
  });
}

BlockParams BlockParams::zeros(std::size_t model_dim, std::size_t n_heads, std::size_t ffn_dim) {
  BlockParams p;
  p.model_dim = model_dim;
  p.n_heads = n_heads;
  p.ffn_dim = ffn_dim;
  p.w_q = p.w_k = p.w_v = p.w_o = Matrix(model_dim, model_dim);
  p.ln1_gain = p.ln1_bias = p.ln2_gain = p.ln2_bias = std::vector<double>(model_dim, 0.0);
  p.ffn_w1 = Matrix(ffn_dim, model_dim);
  p.ffn_w2 = Matrix(model_dim, ffn_dim);
  p.ffn_b1.assign(ffn_dim, 0.0);
  p.ffn_b2.assign(model_dim, 0.0);
  return p;
}

BlockParams BlockParams::random(std::size_t model_dim, std::size_t n_heads, std::size_t ffn_dim,
                                Rng& rng) {
  BlockParams p = zeros(model_dim, n_heads, ffn_dim);
  const double s_model = 1.0 / std::sqrt(static_cast<double>(model_dim));
  const double s_ffn = 1.0 / std::sqrt(static_cast<double>(ffn_dim));
  for (Matrix* m : {&p.w_q, &p.w_k, &p.w_v, &p.w_o, &p.ffn_w1}) rng.fill_normal(m->data, s_model);
  rng.fill_normal(p.ffn_w2.data, s_ffn);
  std::ranges::fill(p.ln1_gain, 1.0);
  std::ranges::fill(p.ln2_gain, 1.0);
  p.validate();
  return p;
}

void add_scaled(BlockParams& dst, double scale, const BlockParams& src) {
  std::vector<std::span<const double>> from;
  src.for_each_tensor([&](const std::string&, const std::vector<std::size_t>&, std::span<const double> v) {
    from.push_back(v);
  });
  std::size_t i = 0;
  dst.for_each_tensor([&](const std::string& name, const std::vector<std::size_t>&, std::span<double> v) {
    if (i >= from.size() || from[i].size() != v.size())
      throw ArgumentError("add_scaled: tensor shape mismatch at " + name);
    detail::axpy(scale, from[i].data(), v.data(), v.size());
    ++i;
  });
}

std::vector<AttentionInputs> project_qkv(const FrameSequence& x, const BlockParams& params) {
  params.validate();
  if (x.dim() != params.model_dim)
    throw ConfigError("project_qkv: input dim " + std::to_string(x.dim()) + " != model_dim " +
                      std::to_string(params.model_dim));
  const std::size_t n = x.n_frames();
  const std::size_t hd = params.head_dim();
  std::vector<AttentionInputs> heads;
  for (std::size_t h = 0; h < params.n_heads; ++h)
    heads.push_back({FrameSequence(n, hd), FrameSequence(n, hd), FrameSequence(n, hd)});
  std::vector<double> q(params.model_dim), k(params.model_dim), v(params.model_dim);
  for (std::size_t t = 0; t < n; ++t) {
    matvec(params.w_q, x.row(t), q);
    matvec(params.w_k, x.row(t), k);
    matvec(params.w_v, x.row(t), v);
    for (std::size_t h = 0; h < params.n_heads; ++h) {
      std::copy_n(q.begin() + h * hd, hd, heads[h].queries.row(t).begin());
      std::copy_n(k.begin() + h * hd, hd, heads[h].keys.row(t).begin());
      std::copy_n(v.begin() + h * hd, hd, heads[h].values.row(t).begin());
    }
  }
  return heads;
}

FrameSequence multi_head_attention(const FrameSequence& x, const BlockParams& params,
                                   const AttentionMode& mode) {
  mode.validate();
  auto heads = project_qkv(x, params);
  const std::size_t n = x.n_frames();
  const std::size_t channels = mode.n_channels();
  std::vector<ProjectedRow> rows(n * channels);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      ProjectedRow& r = rows[t * channels + c];
      r.q.resize(params.model_dim);
      r.k.resize(params.model_dim);
      r.v.resize(params.model_dim);
      for (std::size_t h = 0; h < params.n_heads; ++h) {
        const std::size_t off = h * params.head_dim();
        std::ranges::copy(heads[h].queries.row(t), r.q.begin() + off);
        std::ranges::copy(heads[h].keys.row(t), r.k.begin() + off);
        std::ranges::copy(heads[h].values.row(t), r.v.begin() + off);
      }
    }
  }
  ChanneledSequence merged = run_heads(rows, n, channels, params, mode, nullptr);
  return select_output_channel(merged, mode.designated_channel());
}

void block_project_row(const BlockParams& params, std::span<const double> x, ProjectedRow& out) {
  layer_norm(x, params.ln1_gain, params.ln1_bias, out.xhat, out.rstd, out.normed);
  out.q.resize(params.model_dim);
  out.k.resize(params.model_dim);
  out.v.resize(params.model_dim);
  matvec(params.w_q, out.normed, out.q);
  matvec(params.w_k, out.normed, out.k);
  matvec(params.w_v, out.normed, out.v);
}

void block_finish_row(const BlockParams& params, std::span<const double> x,
                      std::span<const double> merged, FinishedRow& out) {
  const std::size_t d = params.model_dim;
  out.h.resize(d);
  matvec(params.w_o, merged, out.h);
  for (std::size_t i = 0; i < d; ++i) out.h[i] += x[i];
  layer_norm(out.h, params.ln2_gain, params.ln2_bias, out.xhat2, out.rstd2, out.normed2);
  out.pre_act.resize(params.ffn_dim);
  out.act.resize(params.ffn_dim);
  matvec(params.ffn_w1, out.normed2, out.pre_act);
  for (std::size_t i = 0; i < params.ffn_dim; ++i) {
    out.pre_act[i] += params.ffn_b1[i];
    out.act[i] = out.pre_act[i] * sigmoid(out.pre_act[i]);
  }
  out.out.resize(d);
  matvec(params.ffn_w2, out.act, out.out);
  for (std::size_t i = 0; i < d; ++i) out.out[i] += params.ffn_b2[i] + out.h[i];
}

BlockForwardResult encoder_block_forward(const ChanneledSequence& x, const BlockParams& params,
                                         const AttentionMode& mode) {
  mode.validate();
  params.validate();
  if (x.empty()) throw ArgumentError("encoder_block_forward: unset input");
  if (x.dim() != params.model_dim)
    throw ConfigError("encoder_block_forward: input dim " + std::to_string(x.dim()) +
                      " != model_dim " + std::to_string(params.model_dim));
  if (x.n_channels() != mode.n_channels())
    throw ConfigError("encoder_block_forward: input has " + std::to_string(x.n_channels()) +
                      " channels, mode " + mode.describe() + " needs " +
                      std::to_string(mode.n_channels()));
  const std::size_t n = x.n_frames();
  const std::size_t channels = x.n_channels();

  BlockCache cache;
  cache.mode = mode;
  cache.input = x;
  cache.projected.resize(n * channels);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t c = 0; c < channels; ++c)
      block_project_row(params, x.at(t, c), cache.projected[t * channels + c]);

  cache.merged = run_heads(cache.projected, n, channels, params, mode, &cache.heads);

  ChanneledSequence out(n, channels, params.model_dim);
  cache.finished.resize(n * channels);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      FinishedRow& f = cache.finished[t * channels + c];
      block_finish_row(params, x.at(t, c), cache.merged.at(t, c), f);
      std::ranges::copy(f.out, out.at(t, c).begin());
    }
  }
  cache.valid = true;
  return {std::move(out), std::move(cache)};
}

FrameSequence encoder_block_forward(const FrameSequence& x, const BlockParams& params,
                                    const AttentionMode& mode) {
  mode.validate();
  ChanneledSequence in = channelize(x, mode.n_channels() - 1);
  auto res = encoder_block_forward(in, params, mode);
  return select_output_channel(res.output, mode.designated_channel());
}

BlockBackwardResult encoder_block_backward(const BlockParams& params, const BlockCache& cache,
                                           const ChanneledSequence& d_output) {
  if (!cache.valid) throw StateError("encoder_block_backward: missing forward cache");
  params.validate();
  const std::size_t n = cache.input.n_frames();
  const std::size_t channels = cache.input.n_channels();
  const std::size_t d = params.model_dim;
  if (cache.input.dim() != d || cache.heads.size() != params.n_heads ||
      cache.projected.size() != n * channels)
    throw StateError("encoder_block_backward: cache does not match parameters");
  if (!d_output.same_shape(cache.input))
    throw ArgumentError("encoder_block_backward: d_output shape mismatch");

  BlockBackwardResult res{ChanneledSequence(n, channels, d),
                          BlockParams::zeros(d, params.n_heads, params.ffn_dim)};
  BlockParams& g = res.d_params;
  ChanneledSequence d_merged(n, channels, d);
  std::vector<double> d_act(params.ffn_dim), d_pre(params.ffn_dim), d_normed2(d), d_h(d);

  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const FinishedRow& f = cache.finished[t * channels + c];
      auto dy = d_output.at(t, c);
      std::ranges::copy(dy, d_h.begin());
      for (std::size_t i = 0; i < d; ++i) g.ffn_b2[i] += dy[i];
      outer_add(g.ffn_w2, dy, f.act);
      std::ranges::fill(d_act, 0.0);
      matvec_transposed_add(params.ffn_w2, dy, d_act);
      for (std::size_t i = 0; i < params.ffn_dim; ++i) {
        const double s = sigmoid(f.pre_act[i]);
        d_pre[i] = d_act[i] * s * (1.0 + f.pre_act[i] * (1.0 - s));
        g.ffn_b1[i] += d_pre[i];
      }
      outer_add(g.ffn_w1, d_pre, f.normed2);
      std::ranges::fill(d_normed2, 0.0);
      matvec_transposed_add(params.ffn_w1, d_pre, d_normed2);
      layer_norm_backward(d_normed2, f.xhat2, f.rstd2, params.ln2_gain, g.ln2_gain, g.ln2_bias, d_h);

      auto dx = res.d_input.at(t, c);
      std::ranges::copy(d_h, dx.begin());
      outer_add(g.w_o, d_h, cache.merged.at(t, c));
      matvec_transposed_add(params.w_o, d_h, d_merged.at(t, c));
    }
  }

  const std::size_t hd = params.head_dim();
  ChanneledSequence d_q(n, channels, d), d_k(n, channels, d), d_v(n, channels, d);
  for (std::size_t h = 0; h < params.n_heads; ++h) {
    const std::size_t off = h * hd;
    const HeadCache& hc = cache.heads[h];
    if (cache.mode.kind == AttentionKind::llsa) {
      const auto& in = std::get<LlsaInputs>(hc.inputs);
      ChanneledSequence dy(n, channels, hd);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < channels; ++c)
          std::copy_n(d_merged.at(t, c).begin() + off, hd, dy.at(t, c).begin());
      ChanneledGrad hg = llsa_backward(in, *cache.mode.band, std::get<LlsaScores>(hc.scores), dy);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < channels; ++c) {
          std::ranges::copy(hg.d_queries.at(t, c), d_q.at(t, c).begin() + off);
          std::ranges::copy(hg.d_keys.at(t, c), d_k.at(t, c).begin() + off);
          std::ranges::copy(hg.d_values.at(t, c), d_v.at(t, c).begin() + off);
        }
      }
      continue;
    }
    const auto& in = std::get<AttentionInputs>(hc.inputs);
    FrameSequence dy(n, hd);
    for (std::size_t t = 0; t < n; ++t) std::copy_n(d_merged.at(t, 0).begin() + off, hd, dy.row(t).begin());
    GradTriple hg;
    switch (cache.mode.kind) {
      case AttentionKind::aa:
        hg = aa_backward(in, std::get<DenseScoreCache<double>>(hc.scores), dy);
        break;
      case AttentionKind::maa:
        hg = maa_backward(in, build_band_mask(n, *cache.mode.band),
                          std::get<DenseScoreCache<double>>(hc.scores), dy);
        break;
      case AttentionKind::sa:
        hg = sa_backward(in, *cache.mode.band, std::get<BandedScores<double>>(hc.scores), dy);
        break;
      case AttentionKind::llsa:
        break;
    }
    for (std::size_t t = 0; t < n; ++t) {
      std::ranges::copy(hg.d_queries.row(t), d_q.at(t, 0).begin() + off);
      std::ranges::copy(hg.d_keys.row(t), d_k.at(t, 0).begin() + off);
      std::ranges::copy(hg.d_values.row(t), d_v.at(t, 0).begin() + off);
    }
  }

  std::vector<double> d_normed(d);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const ProjectedRow& p = cache.projected[t * channels + c];
      outer_add(g.w_q, d_q.at(t, c), p.normed);
      outer_add(g.w_k, d_k.at(t, c), p.normed);
      outer_add(g.w_v, d_v.at(t, c), p.normed);
      std::ranges::fill(d_normed, 0.0);
      matvec_transposed_add(params.w_q, d_q.at(t, c), d_normed);
      matvec_transposed_add(params.w_k, d_k.at(t, c), d_normed);
      matvec_transposed_add(params.w_v, d_v.at(t, c), d_normed);
      layer_norm_backward(d_normed, p.xhat, p.rstd, params.ln1_gain, g.ln1_gain, g.ln1_bias,
                          res.d_input.at(t, c));
    }
  }
  return res;
}

void add_positional_encoding_row(std::size_t t, std::span<double> row) {
  const double d = static_cast<double>(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    const double pair = static_cast<double>(i - i % 2);
    const double angle = static_cast<double>(t) / std::pow(10000.0, pair / d);
    row[i] += (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
}

void add_positional_encoding(FrameSequence& x, std::size_t first_index) {
  for (std::size_t t = 0; t < x.n_frames(); ++t) add_positional_encoding_row(first_index + t, x.row(t));
}

void EncoderStack::validate() const {
  if (blocks.empty()) throw ConfigError("EncoderStack: no blocks");
  for (const auto& b : blocks) {
    b.validate();
    if (b.model_dim != blocks.front().model_dim)
      throw ConfigError("EncoderStack: blocks disagree on model_dim");
  }
}

EncoderStack EncoderStack::random(std::size_t n_layers, std::size_t model_dim, std::size_t n_heads,
                                  std::size_t ffn_dim, std::uint64_t seed) {
  if (n_layers == 0) throw ConfigError("EncoderStack: n_layers must be >= 1");
  if (n_heads == 0 || model_dim % n_heads != 0)
    throw ConfigError("EncoderStack: model_dim must be divisible by n_heads");
  Rng rng(seed);
  EncoderStack s;
  for (std::size_t l = 0; l < n_layers; ++l) s.blocks.push_back(BlockParams::random(model_dim, n_heads, ffn_dim, rng));
  return s;
}

StackForwardResult stack_forward(const EncoderStack& stack, const FrameSequence& x,
                                 const AttentionMode& mode) {
  stack.validate();
  mode.validate();
  if (x.dim() != stack.model_dim())
    throw ConfigError("stack_forward: input dim " + std::to_string(x.dim()) + " != model_dim " +
                      std::to_string(stack.model_dim()));
  FrameSequence in = x;
  if (stack.positional_encoding) add_positional_encoding(in);
  ChanneledSequence act = channelize(in, mode.n_channels() - 1);
  StackForwardResult res;
  for (const auto& block : stack.blocks) {
    auto step = encoder_block_forward(act, block, mode);
    act = std::move(step.output);
    res.caches.push_back(std::move(step.cache));
  }
  res.output = select_output_channel(act, mode.designated_channel());
  res.channels = std::move(act);
  return res;
}

StackBackwardResult stack_backward(const EncoderStack& stack, const StackForwardResult& forward,
                                   const FrameSequence& d_output) {
  if (forward.caches.size() != stack.blocks.size())
    throw StateError("stack_backward: forward result does not match the stack");
  const ChanneledSequence& top = forward.channels;
  if (d_output.n_frames() != top.n_frames() || d_output.dim() != top.dim())
    throw ArgumentError("stack_backward: d_output shape mismatch");
  const AttentionMode& mode = forward.caches.front().mode;
  ChanneledSequence grad(top.n_frames(), top.n_channels(), top.dim());
  for (std::size_t t = 0; t < top.n_frames(); ++t)
    std::ranges::copy(d_output.row(t), grad.at(t, mode.designated_channel()).begin());

  StackBackwardResult res;
  res.d_blocks.resize(stack.blocks.size());
  for (std::size_t l = stack.blocks.size(); l-- > 0;) {
    auto step = encoder_block_backward(stack.blocks[l], forward.caches[l], grad);
    grad = std::move(step.d_input);
    res.d_blocks[l] = std::move(step.d_params);
  }
  // Channelizing duplicates the input, so its adjoint sums the channels.
  res.d_input = FrameSequence(top.n_frames(), top.dim());
  for (std::size_t t = 0; t < top.n_frames(); ++t)
    for (std::size_t c = 0; c < grad.n_channels(); ++c)
      detail::axpy(1.0, grad.at(t, c).data(), res.d_input.row(t).data(), top.dim());
  return res;
}

}  // namespace bsattn
