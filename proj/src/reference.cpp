#include "bsattn/reference.hpp"

#include <cmath>

#include "bsattn/errors.hpp"

namespace bsattn::reference {

namespace {

struct Slot {
  std::size_t time;
  std::size_t channel;
};

std::vector<Slot> window(const AttentionMode& mode, std::size_t n, std::size_t t, std::size_t c) {
  std::vector<Slot> w;
  const auto in_range = [n](std::ptrdiff_t u) { return u >= 0 && u < static_cast<std::ptrdiff_t>(n); };
  if (mode.kind == AttentionKind::aa) {
    for (std::size_t u = 0; u < n; ++u) w.push_back({u, 0});
    return w;
  }
  const auto b = static_cast<std::ptrdiff_t>(mode.band->look_back);
  const auto a = static_cast<std::ptrdiff_t>(mode.band->look_ahead);
  const auto tt = static_cast<std::ptrdiff_t>(t);
  if (mode.kind != AttentionKind::llsa) {
    for (std::ptrdiff_t u = tt - b; u <= tt + a; ++u)
      if (in_range(u)) w.push_back({static_cast<std::size_t>(u), 0});
    return w;
  }
  // Rooted at s = t - (A - c): full look-ahead frames up to s, then the
  // frames after s, each seen with as much look-ahead as t + c allows.
  const std::ptrdiff_t s = tt - (a - static_cast<std::ptrdiff_t>(c));
  for (std::ptrdiff_t u = s - b; u <= s + a; ++u) {
    if (!in_range(u)) continue;
    const std::ptrdiff_t ch = u <= s ? a : tt + static_cast<std::ptrdiff_t>(c) - u;
    w.push_back({static_cast<std::size_t>(u), static_cast<std::size_t>(ch)});
  }
  return w;
}

Real silu(Real u) { return u / (1.0L + std::exp(-u)); }

void layer_norm(const Real* x, const Real* gain, const Real* bias, std::size_t d, Real* y) {
  Real mean = 0;
  for (std::size_t i = 0; i < d; ++i) mean += x[i];
  mean /= static_cast<Real>(d);
  Real var = 0;
  for (std::size_t i = 0; i < d; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= static_cast<Real>(d);
  const Real r = 1.0L / std::sqrt(var + 1e-5L);
  for (std::size_t i = 0; i < d; ++i) y[i] = gain[i] * (x[i] - mean) * r + bias[i];
}

// y = W x, W rows x cols row-major.
void apply(const Real* w, std::size_t rows, std::size_t cols, const Real* x, Real* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    Real s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += w[r * cols + c] * x[c];
    y[r] = s;
  }
}

}  // namespace

std::vector<Real> attention(const AttentionMode& mode, std::span<const Real> q, std::span<const Real> k,
                            std::span<const Real> v, std::size_t n, std::size_t dim) {
  mode.validate();
  const std::size_t channels = mode.n_channels();
  if (q.size() != n * channels * dim || k.size() != q.size() || v.size() != q.size())
    throw ArgumentError("reference::attention: shape mismatch");
  std::vector<Real> y(q.size(), 0.0L);
  const Real scale = 1.0L / std::sqrt(static_cast<Real>(dim));
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const Real* qr = &q[(t * channels + c) * dim];
      const auto w = window(mode, n, t, c);
      std::vector<Real> z(w.size());
      Real peak = -INFINITY;
      for (std::size_t j = 0; j < w.size(); ++j) {
        const Real* kr = &k[(w[j].time * channels + w[j].channel) * dim];
        Real s = 0;
        for (std::size_t i = 0; i < dim; ++i) s += qr[i] * kr[i];
        z[j] = s * scale;
        peak = std::max(peak, z[j]);
      }
      Real total = 0;
      for (auto& e : z) total += (e = std::exp(e - peak));
      Real* yr = &y[(t * channels + c) * dim];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const Real* vr = &v[(w[j].time * channels + w[j].channel) * dim];
        for (std::size_t i = 0; i < dim; ++i) yr[i] += z[j] / total * vr[i];
      }
    }
  }
  return y;
}

std::vector<Real> flatten(const BlockParams& p) {
  std::vector<Real> out;
  p.for_each_tensor([&](const std::string&, const std::vector<std::size_t>&, std::span<const double> v) {
    out.insert(out.end(), v.begin(), v.end());
  });
  return out;
}

std::vector<Real> block(const AttentionMode& mode, std::span<const Real> params, std::span<const Real> x,
                        std::size_t n, std::size_t d, std::size_t n_heads, std::size_t f) {
  const std::size_t channels = mode.n_channels();
  const std::size_t rows = n * channels;
  if (x.size() != rows * d) throw ArgumentError("reference::block: input shape mismatch");
  if (params.size() != 4 * d * d + 4 * d + 2 * f * d + f + d)
    throw ArgumentError("reference::block: parameter count mismatch");
  const Real* wq = params.data();
  const Real* wk = wq + d * d;
  const Real* wv = wk + d * d;
  const Real* wo = wv + d * d;
  const Real* g1 = wo + d * d;
  const Real* b1 = g1 + d;
  const Real* g2 = b1 + d;
  const Real* b2 = g2 + d;
  const Real* w1 = b2 + d;
  const Real* fb1 = w1 + f * d;
  const Real* w2 = fb1 + f;
  const Real* fb2 = w2 + d * f;

  std::vector<Real> q(rows * d), k(rows * d), v(rows * d), normed(d);
  for (std::size_t r = 0; r < rows; ++r) {
    layer_norm(&x[r * d], g1, b1, d, normed.data());
    apply(wq, d, d, normed.data(), &q[r * d]);
    apply(wk, d, d, normed.data(), &k[r * d]);
    apply(wv, d, d, normed.data(), &v[r * d]);
  }
  const std::size_t hd = d / n_heads;
  std::vector<Real> merged(rows * d);
  for (std::size_t h = 0; h < n_heads; ++h) {
    std::vector<Real> qh(rows * hd), kh(rows * hd), vh(rows * hd);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < hd; ++i) {
        qh[r * hd + i] = q[r * d + h * hd + i];
        kh[r * hd + i] = k[r * d + h * hd + i];
        vh[r * hd + i] = v[r * d + h * hd + i];
      }
    const auto yh = attention(mode, qh, kh, vh, n, hd);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < hd; ++i) merged[r * d + h * hd + i] = yh[r * hd + i];
  }
  std::vector<Real> out(rows * d), hrow(d), n2(d), pre(f);
  for (std::size_t r = 0; r < rows; ++r) {
    apply(wo, d, d, &merged[r * d], hrow.data());
    for (std::size_t i = 0; i < d; ++i) hrow[i] += x[r * d + i];
    layer_norm(hrow.data(), g2, b2, d, n2.data());
    apply(w1, f, d, n2.data(), pre.data());
    for (std::size_t i = 0; i < f; ++i) pre[i] = silu(pre[i] + fb1[i]);
    apply(w2, d, f, pre.data(), &out[r * d]);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] += fb2[i] + hrow[i];
  }
  return out;
}

std::vector<double> central_difference(const RealFunction& fn, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ArgumentError("central_difference: h must be > 0");
  std::vector<Real> p(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real orig = p[i];
    p[i] = orig + h;
    const Real up = fn(p);
    p[i] = orig - h;
    const Real down = fn(p);
    p[i] = orig;
    const Real d = (up - down) / (2.0L * h);
    if (!std::isfinite(d)) throw OracleError("central_difference: non-finite evaluation", i);
    g[i] = static_cast<double>(d);
  }
  return g;
}

}  // namespace bsattn::reference
