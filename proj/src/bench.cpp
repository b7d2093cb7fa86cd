#include "bsattn/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>
#include <thread>

#include "bsattn/accounting.hpp"
#include "bsattn/banded.hpp"
#include "bsattn/dense.hpp"
#include "bsattn/errors.hpp"
#include "bsattn/experiments.hpp"
#include "bsattn/llsa.hpp"
#include "bsattn/reference.hpp"
#include "bsattn/streaming.hpp"

namespace bsattn {

namespace {

constexpr double kForwardTol = 1e-10;
constexpr double kBackwardTol = 1e-8;
constexpr double kDuplicationTol = 1e-12;
constexpr double kKernelGradTol = 1e-5;
constexpr double kBlockGradTol = 1e-4;
constexpr double kGradFloor = 1e-8;
constexpr double kFdStep = 1e-6;
constexpr double kStreamTol = 1e-10;

template <typename T>
BasicAttentionInputs<T> random_inputs(std::size_t n, std::size_t d, Rng& rng) {
  BasicAttentionInputs<T> in{BasicFrameSequence<T>(n, d), BasicFrameSequence<T>(n, d), BasicFrameSequence<T>(n, d)};
  for (auto* s : {&in.queries, &in.keys, &in.values})
    for (T& v : s->storage()) v = static_cast<T>(rng.normal());
  return in;
}

FrameSequence random_frames(std::size_t n, std::size_t d, Rng& rng) {
  FrameSequence x(n, d);
  rng.fill_normal(x.storage(), 1.0);
  return x;
}

double max_abs(const GradTriple& a, const GradTriple& b) {
  return std::max({max_abs_diff(a.d_queries, b.d_queries), max_abs_diff(a.d_keys, b.d_keys),
                   max_abs_diff(a.d_values, b.d_values)});
}

// Relative error over coordinates above the floor; tracks the worst one.
struct RelErr {
  double worst = 0.0;
  std::string where = "-";
  std::size_t checked = 0;

  void add(double analytic, double numeric, const std::string& name, std::size_t index) {
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    if (mag <= kGradFloor) return;
    ++checked;
    const double rel = std::abs(analytic - numeric) / mag;
    if (rel > worst || checked == 1) {
      worst = std::max(worst, rel);
      where = name + "[" + std::to_string(index) + "]";
    }
  }
};

std::string describe_band(std::size_t b, std::size_t a) {
  return "B=" + std::to_string(b) + " A=" + std::to_string(a);
}

AttentionKind kind_or(const BenchConfig& cfg, AttentionKind fallback) {
  return cfg.mode ? parse_attention_kind(*cfg.mode) : fallback;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<EquivalenceRow> sa_maa_grid(std::size_t n_seeds, std::uint64_t seed0, bool inject_fault) {
  std::vector<EquivalenceRow> rows;
  bool fault_pending = inject_fault;
  for (std::size_t n : {4, 8, 16, 32}) {
    for (std::size_t d : {1, 2, 4}) {
      for (std::size_t a : {0, 1, 2, 8}) {
        for (std::size_t b : {0, 1, 2, 8}) {
          for (std::size_t s = 0; s < n_seeds; ++s) {
            const std::uint64_t seed = seed0 + s;
            Rng rng(seed * 7919 + n * 131 + d * 17 + a * 5 + b);
            const auto in = random_inputs<double>(n, d, rng);
            const BandSpec band{b, a};
            auto sa = sa_forward(in, band);
            const BandMask mask = build_band_mask(n, band);
            const auto maa = maa_forward(in, mask);
            FrameSequence sa_out = std::move(sa.output);
            if (fault_pending) {
              sa.scores.row(0)[sa.scores.valid_lo(0)] += 0.25;
              sa_out = sa_weighted_sum(in.values, sa.scores);
              fault_pending = false;
            }
            const FrameSequence g = random_frames(n, d, rng);
            const GradTriple g_sa = sa_backward(in, band, sa.scores, g);
            const GradTriple g_maa = maa_backward(in, mask, maa.cache, g);
            EquivalenceRow r{"sa_vs_maa", n, d, b, a, seed, 0, max_abs_diff(sa_out, maa.output), max_abs(g_sa, g_maa), false};
            r.pass = r.forward_err <= kForwardTol && r.backward_err <= kBackwardTol;
            rows.push_back(r);
          }
        }
      }
    }
  }
  return rows;
}

std::vector<EquivalenceRow> llsa_duplication_grid(std::uint64_t seed0) {
  std::vector<EquivalenceRow> rows;
  const std::size_t d = 3;
  for (std::size_t a = 0; a <= 4; ++a) {
    for (std::size_t b = 0; b <= 4; ++b) {
      for (std::size_t n : {1, 2, 3, 5, 8, 13, 21, 32}) {
        const std::uint64_t seed = seed0 + a * 100 + b * 10 + n;
        Rng rng(seed);
        const auto in = random_inputs<double>(n, d, rng);
        const BandSpec band{b, a};
        LlsaInputs li{channelize(in.queries, a), channelize(in.keys, a), channelize(in.values, a)};
        const auto out = llsa_forward(li, band).output;
        for (std::size_t c = 0; c <= a; ++c) {
          const auto ref = sa_forward(in, BandSpec{b + a - c, c}).output;
          EquivalenceRow r{"llsa_dup", n, d, b, a, seed, c, max_abs_diff(select_output_channel(out, c), ref), 0.0, false};
          r.pass = r.forward_err <= kDuplicationTol;
          rows.push_back(r);
        }
      }
    }
  }
  return rows;
}

namespace {

GradcheckRow check_kernel(bool llsa, std::size_t index, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 1 + rng.below(6);
  const std::size_t d = 1 + rng.below(3);
  const BandSpec band{static_cast<std::size_t>(rng.below(4)), static_cast<std::size_t>(rng.below(4))};
  const std::size_t channels = llsa ? band.look_ahead + 1 : 1;
  const std::size_t per = n * channels * d;
  std::vector<double> x(3 * per);
  rng.fill_normal(x, 1.0);
  std::vector<double> g(per);
  rng.fill_normal(g, 1.0);

  auto unpack_llsa = [&](std::span<const double> v) {
    LlsaInputs in{ChanneledSequence(n, channels, d), ChanneledSequence(n, channels, d),
                  ChanneledSequence(n, channels, d)};
    std::copy_n(v.begin(), per, in.queries.values().begin());
    std::copy_n(v.begin() + per, per, in.keys.values().begin());
    std::copy_n(v.begin() + 2 * per, per, in.values.values().begin());
    return in;
  };
  auto unpack_sa = [&](std::span<const double> v) {
    AttentionInputs in{FrameSequence(n, d, std::vector<double>(v.begin(), v.begin() + per)),
                       FrameSequence(n, d, std::vector<double>(v.begin() + per, v.begin() + 2 * per)),
                       FrameSequence(n, d, std::vector<double>(v.begin() + 2 * per, v.end()))};
    return in;
  };

  std::vector<double> analytic(3 * per);
  if (llsa) {
    const auto in = unpack_llsa(x);
    const auto fwd = llsa_forward(in, band);
    ChanneledSequence dy(n, channels, d);
    std::ranges::copy(g, dy.values().begin());
    const auto gr = llsa_backward(in, band, fwd.scores, dy);
    std::ranges::copy(gr.d_queries.values(), analytic.begin());
    std::ranges::copy(gr.d_keys.values(), analytic.begin() + per);
    std::ranges::copy(gr.d_values.values(), analytic.begin() + 2 * per);
  } else {
    const auto in = unpack_sa(x);
    const auto fwd = sa_forward(in, band);
    const FrameSequence dy(n, d, g);
    const auto gr = sa_backward(in, band, fwd.scores, dy);
    std::ranges::copy(gr.d_queries.values(), analytic.begin());
    std::ranges::copy(gr.d_keys.values(), analytic.begin() + per);
    std::ranges::copy(gr.d_values.values(), analytic.begin() + 2 * per);
  }
  // Numeric side runs on the extended-precision reference.
  const AttentionMode mode = llsa ? AttentionMode::low_latency(band) : AttentionMode::streaming(band);
  const auto f = [&](std::span<const reference::Real> v) {
    const auto y = reference::attention(mode, v.subspan(0, per), v.subspan(per, per), v.subspan(2 * per, per), n, d);
    reference::Real s = 0;
    for (std::size_t i = 0; i < per; ++i) s += g[i] * y[i];
    return s;
  };
  const auto numeric = reference::central_difference(f, x, kFdStep);
  RelErr err;
  const char* names[3] = {"d_queries", "d_keys", "d_values"};
  for (std::size_t i = 0; i < x.size(); ++i) err.add(analytic[i], numeric[i], names[i / per], i % per);
  GradcheckRow row{llsa ? "llsa" : "sa", index, seed, n, d, band.look_back, band.look_ahead, err.checked, err.worst, err.where, false};
  row.pass = err.worst <= kKernelGradTol;
  return row;
}

GradcheckRow check_block(bool llsa, std::size_t index, std::uint64_t seed) {
  const std::size_t n = llsa ? 3 : 4;
  const std::size_t dim = 4;
  const BandSpec band{1, 1};
  const AttentionMode mode = llsa ? AttentionMode::low_latency(band) : AttentionMode::streaming(band);
  Rng rng(seed);
  BlockParams params = BlockParams::random(dim, 1, 8, rng);
  // Non-trivial norm parameters so their gradients are exercised too.
  for (auto* v : {&params.ln1_gain, &params.ln1_bias, &params.ln2_gain, &params.ln2_bias, &params.ffn_b1, &params.ffn_b2})
    for (double& e : *v) e += 0.3 * rng.normal();
  const std::size_t channels = mode.n_channels();
  ChanneledSequence x(n, channels, dim);
  rng.fill_normal(x.values(), 1.0);
  ChanneledSequence g(n, channels, dim);
  rng.fill_normal(g.values(), 1.0);

  const auto fwd = encoder_block_forward(x, params, mode);
  const auto back = encoder_block_backward(params, fwd.cache, g);

  std::vector<double> analytic;
  back.d_params.for_each_tensor([&](const std::string&, const std::vector<std::size_t>&, std::span<const double> v) {
    analytic.insert(analytic.end(), v.begin(), v.end());
  });
  const std::size_t n_params = analytic.size();
  analytic.insert(analytic.end(), back.d_input.values().begin(), back.d_input.values().end());
  std::vector<double> point;
  for (const auto v : reference::flatten(params)) point.push_back(static_cast<double>(v));
  point.insert(point.end(), x.values().begin(), x.values().end());

  const auto f = [&](std::span<const reference::Real> v) {
    const auto y = reference::block(mode, v.subspan(0, n_params), v.subspan(n_params), n, dim, params.n_heads,
                                    params.ffn_dim);
    reference::Real s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += g.values()[i] * y[i];
    return s;
  };
  const auto numeric = reference::central_difference(f, point, kFdStep);

  std::vector<std::pair<std::string, std::size_t>> names;
  params.for_each_tensor([&](const std::string& name, const std::vector<std::size_t>&, std::span<const double> v) {
    for (std::size_t i = 0; i < v.size(); ++i) names.emplace_back(name, i);
  });
  for (std::size_t i = 0; i < x.values().size(); ++i) names.emplace_back("d_input", i);
  RelErr err;
  for (std::size_t i = 0; i < analytic.size(); ++i) err.add(analytic[i], numeric[i], names[i].first, names[i].second);
  GradcheckRow row{llsa ? "block_llsa" : "block_sa", index, seed, n, dim, band.look_back, band.look_ahead, err.checked, err.worst, err.where, false};
  row.pass = err.worst <= kBlockGradTol;
  return row;
}

}  // namespace

std::vector<GradcheckRow> gradcheck_suite(std::size_t cases_per_kernel, std::uint64_t seed0) {
  std::vector<GradcheckRow> rows;
  for (std::size_t i = 0; i < cases_per_kernel; ++i) rows.push_back(check_kernel(false, i, seed0 + i));
  for (std::size_t i = 0; i < cases_per_kernel; ++i) rows.push_back(check_kernel(true, i, seed0 + 1000 + i));
  for (std::size_t i = 0; i < 3; ++i) rows.push_back(check_block(false, i, seed0 + 2000 + i));
  for (std::size_t i = 0; i < 3; ++i) rows.push_back(check_block(true, i, seed0 + 3000 + i));
  return rows;
}

std::vector<std::size_t> default_windows() {
  std::vector<std::size_t> w;
  for (std::size_t v = 10; v <= 490; v += 10) w.push_back(v);
  return w;
}

BandSpec split_window(std::size_t window) {
  if (window == 0) throw ConfigError("window must be >= 1");
  const std::size_t a = (window - 1) / 2;
  return {window - 1 - a, a};
}

double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("linear_fit_r2: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0.0) return 1.0;
  if (sxx == 0.0) return 0.0;
  return (sxy * sxy) / (sxx * syy);
}

namespace {

struct MemoryJob {
  std::string mode;
  std::size_t heads;
  std::size_t window;
};

template <typename T>
std::vector<BenchRecord> run_memory_job(const MemoryGrid& grid, const MemoryJob& job,
                                        const std::vector<BasicAttentionInputs<T>>& inputs) {
  const std::size_t n = grid.n_frames;
  const BandSpec band = split_window(job.window);
  const bool banded = job.mode == "sa";
  const std::string_view label = banded ? labels::kBandedScores : labels::kDenseScores;
  const std::uint64_t elements = banded ? sa_score_elements(n, band) : maa_score_elements(n);
  std::optional<BandMask> mask;
  if (!banded) mask = build_band_mask(n, band);

  std::vector<BenchRecord> out;
  double wall_sum = 0.0;
  std::uint64_t peak = 0;
  for (std::size_t r = 0; r < grid.repeats; ++r) {
    ScopedAccounting acct;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t h = 0; h < job.heads; ++h) {
      if (banded)
        (void)sa_forward(inputs[h], band);
      else
        (void)maa_forward(inputs[h], *mask);
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    peak = AllocationAccounting::local().peak_bytes(label);
    wall_sum += ms;
    out.push_back({job.mode, n, job.heads, grid.d_k, band.look_back, band.look_ahead, job.window, elements, peak, ms,
                   std::to_string(r)});
  }
  out.push_back({job.mode, n, job.heads, grid.d_k, band.look_back, band.look_ahead, job.window, elements, peak,
                 wall_sum / static_cast<double>(grid.repeats), "mean"});
  return out;
}

template <typename T>
std::vector<BenchRecord> run_memory_grid_t(const MemoryGrid& grid) {
  const std::size_t max_heads = *std::ranges::max_element(grid.heads);
  std::vector<BasicAttentionInputs<T>> inputs;
  Rng rng(grid.seed);
  for (std::size_t h = 0; h < max_heads; ++h) inputs.push_back(random_inputs<T>(grid.n_frames, grid.d_k, rng));

  std::vector<MemoryJob> jobs;
  for (const auto& m : grid.modes)
    for (std::size_t h : grid.heads)
      for (std::size_t w : grid.windows) jobs.push_back({m, h, w});

  std::vector<std::vector<BenchRecord>> results(jobs.size());
  if (grid.parallel) {
    const std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) results[i] = run_memory_job(grid, jobs[i], inputs);
      });
  } else {
    for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = run_memory_job(grid, jobs[i], inputs);
  }
  std::vector<BenchRecord> out;
  for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
  return out;
}

}  // namespace

std::vector<BenchRecord> run_memory_grid(const MemoryGrid& grid) {
  if (grid.n_frames == 0 || grid.d_k == 0 || grid.heads.empty() || grid.windows.empty() || grid.repeats == 0)
    throw ConfigError("bench-memory: empty grid");
  for (const auto& m : grid.modes)
    if (m != "sa" && m != "maa") throw ConfigError("bench-memory: mode must be sa or maa, got " + m);
  for (std::size_t h : grid.heads)
    if (h == 0) throw ConfigError("bench-memory: heads must be >= 1");
  return grid.precision == Precision::f32 ? run_memory_grid_t<float>(grid) : run_memory_grid_t<double>(grid);
}

// ---------------------------------------------------------------------------

int cmd_equivalence(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag) {
  if (cfg.window) {
    const std::size_t n = cfg.n_frames.value_or(6000);
    const BandSpec band = split_window(*cfg.window);
    const std::uint64_t banded = sa_score_elements(n, band);
    const std::uint64_t dense = maa_score_elements(n);
    csv << "n_frames,window,look_back,look_ahead,banded_score_elements,dense_score_elements,ratio\n";
    csv << n << ',' << *cfg.window << ',' << band.look_back << ',' << band.look_ahead << ',' << banded << ','
        << dense << ',' << format_double(static_cast<double>(banded) / static_cast<double>(dense)) << '\n';
    diag << "score elements: banded " << banded << " vs dense " << dense << '\n';
    return 0;
  }
  const std::size_t seeds = cfg.repeats.value_or(3);
  auto rows = sa_maa_grid(seeds, cfg.seed, cfg.inject_fault);
  auto dup = llsa_duplication_grid(cfg.seed);
  rows.insert(rows.end(), dup.begin(), dup.end());
  csv << "suite,n_frames,dim,look_back,look_ahead,seed,channel,forward_err,backward_err,pass\n";
  std::size_t failed = 0;
  for (const auto& r : rows) {
    csv << r.suite << ',' << r.n_frames << ',' << r.dim << ',' << r.look_back << ',' << r.look_ahead << ',' << r.seed
        << ',' << r.channel << ',' << format_double(r.forward_err) << ',' << format_double(r.backward_err) << ','
        << (r.pass ? 1 : 0) << '\n';
    if (!r.pass) {
      ++failed;
      diag << "FAIL " << r.suite << " N=" << r.n_frames << " d=" << r.dim << ' '
           << describe_band(r.look_back, r.look_ahead) << " seed=" << r.seed << " c=" << r.channel
           << " forward=" << format_double(r.forward_err) << " backward=" << format_double(r.backward_err) << '\n';
    }
  }
  diag << rows.size() - failed << '/' << rows.size() << " equivalence cases within tolerance\n";
  return failed == 0 ? 0 : 1;
}

int cmd_gradcheck(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag) {
  const auto rows = gradcheck_suite(cfg.repeats.value_or(20), cfg.seed);
  csv << "kernel,case,seed,n_frames,dim,look_back,look_ahead,checked,max_rel_err,worst,pass\n";
  std::size_t failed = 0;
  auto emit = [&](const GradcheckRow& r, const std::string& kernel, const std::string& index) {
    csv << kernel << ',' << index << ',' << r.seed << ',' << r.n_frames << ',' << r.dim << ',' << r.look_back << ','
        << r.look_ahead << ',' << r.checked << ',' << format_double(r.max_rel_err) << ',' << r.worst << ','
        << (r.pass ? 1 : 0) << '\n';
  };
  for (const auto& r : rows) {
    emit(r, r.kernel, std::to_string(r.case_index));
    if (!r.pass) {
      ++failed;
      diag << "FAIL " << r.kernel << " case " << r.case_index << " seed " << r.seed << " rel "
           << format_double(r.max_rel_err) << " at " << r.worst << '\n';
    }
  }
  // Worst case per kernel, pinned by seed for regression tracking.
  for (const char* k : {"sa", "llsa", "block_sa", "block_llsa"}) {
    const GradcheckRow* worst = nullptr;
    for (const auto& r : rows)
      if (r.kernel == k && (worst == nullptr || r.max_rel_err > worst->max_rel_err)) worst = &r;
    if (worst) emit(*worst, std::string(k), "worst");
  }
  diag << rows.size() - failed << '/' << rows.size() << " gradient checks within tolerance\n";
  return failed == 0 ? 0 : 1;
}

int cmd_bench_memory(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag) {
  MemoryGrid grid;
  grid.n_frames = cfg.n_frames.value_or(grid.n_frames);
  grid.d_k = cfg.d_k.value_or(grid.d_k);
  if (cfg.heads) grid.heads = *cfg.heads;
  if (cfg.window) grid.windows = {*cfg.window};
  else grid.windows = default_windows();
  if (cfg.mode) grid.modes = {*cfg.mode};
  grid.repeats = cfg.repeats.value_or(grid.repeats);
  grid.precision = cfg.precision;
  grid.seed = cfg.seed;
  grid.parallel = cfg.parallel;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_memory_grid(grid);
  csv << "mode,n_frames,n_heads,d_k,look_back,look_ahead,window,score_elements,peak_score_bytes,wall_ms,repeat\n";
  const std::size_t width = static_cast<std::size_t>(grid.precision);
  int status = 0;
  for (const auto& r : rows) {
    csv << r.mode << ',' << r.n_frames << ',' << r.n_heads << ',' << r.d_k << ',' << r.look_back << ','
        << r.look_ahead << ',' << r.window << ',' << r.score_elements << ',' << r.peak_score_bytes << ','
        << format_double(cfg.deterministic ? 0.0 : r.wall_ms) << ',' << r.repeat << '\n';
    if (r.peak_score_bytes != r.score_elements * width) {
      diag << "accounting mismatch: " << r.mode << " window " << r.window << " peak " << r.peak_score_bytes
           << " != " << r.score_elements << " x " << width << '\n';
      status = 1;
    }
  }
  for (const auto& m : grid.modes) {
    std::vector<double> x, y;
    for (const auto& r : rows)
      if (r.mode == m && r.repeat == "mean" && r.n_heads == grid.heads.front()) {
        x.push_back(static_cast<double>(r.window));
        y.push_back(static_cast<double>(r.score_elements));
      }
    if (x.size() >= 2) diag << m << " score elements vs window: R^2 = " << format_double(linear_fit_r2(x, y)) << '\n';
  }
  diag << "bench-memory: " << rows.size() << " records in "
       << format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) << " s\n";
  return status;
}

int cmd_latency(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag) {
  const double frame_duration = cfg.frame_ms / 1000.0;
  if (!(frame_duration > 0.0)) throw ConfigError("--frame-ms must be positive");
  std::vector<AttentionKind> kinds;
  if (cfg.mode) kinds = {parse_attention_kind(*cfg.mode)};
  else kinds = {AttentionKind::sa, AttentionKind::llsa};
  std::vector<std::size_t> lookaheads;
  if (cfg.look_ahead) lookaheads = {*cfg.look_ahead};
  else lookaheads = {8, 16};
  const std::size_t layers = cfg.layers.value_or(12);
  csv << "mode,look_ahead,layers,frame_ms,frames,seconds\n";
  for (auto kind : kinds) {
    for (std::size_t a : lookaheads) {
      const auto r = latency_report(kind, a, layers, frame_duration);
      csv << to_string(kind) << ',' << a << ',' << layers << ',' << format_double(cfg.frame_ms) << ','
          << (r.frames ? std::to_string(*r.frames) : "unbounded") << ','
          << (r.seconds ? format_double(*r.seconds) : "unbounded") << '\n';
      diag << to_string(kind) << " A=" << a << " L=" << layers << ": "
           << (r.seconds ? format_double(*r.seconds) + " s" : std::string("whole sequence")) << '\n';
    }
  }
  return 0;
}

namespace {

SyntheticTask task_from(const BenchConfig& cfg) {
  SyntheticTask task;
  task.seed = cfg.seed;
  if (cfg.n_frames) task.n_frames = *cfg.n_frames;
  return task;
}

ToyModelConfig toy_from(const BenchConfig& cfg) {
  ToyModelConfig c;
  if (cfg.heads) c.n_heads = cfg.heads->front();
  if (cfg.layers) c.n_layers = *cfg.layers;
  if (cfg.look_back) c.band.look_back = *cfg.look_back;
  if (cfg.look_ahead) c.band.look_ahead = *cfg.look_ahead;
  return c;
}

}  // namespace

int cmd_train_toy(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag) {
  const Schedule schedule = parse_schedule(cfg.schedule);
  const TaskSplits splits = make_splits(task_from(cfg));
  const ToyModelConfig model = toy_from(cfg);
  const TrainResult res = run_schedule(splits, model, schedule, OptimizerConfig{}, cfg.seed);
  write_loss_csv_header(csv);
  write_train_csv(csv, res.report);
  const auto& r = res.report;
  diag << "schedule " << r.schedule << " seed " << r.seed << '\n'
       << "  eval before training: sa " << format_double(r.eval_initial_sa) << ", llsa "
       << format_double(r.eval_initial_llsa) << '\n'
       << "  eval after training:  sa " << format_double(r.eval_sa) << ", llsa " << format_double(r.eval_llsa)
       << '\n';
  if (cfg.checkpoint) {
    save_checkpoint(*cfg.checkpoint, res.model.tensors(), cfg.precision);
    diag << "  checkpoint written to " << *cfg.checkpoint << '\n';
  }
  return 0;
}

int cmd_ablation(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag) {
  if (cfg.llsa_grid.empty()) throw ConfigError("--llsa-grid is empty");
  if (cfg.seeds == 0) throw ConfigError("--seeds must be >= 1");
  std::vector<std::size_t> grid;
  for (std::size_t pct : cfg.llsa_grid) {
    if (pct > 100) throw ConfigError("--llsa-grid values are percentages in [0, 100]");
    grid.push_back(cfg.total_steps * pct / 100);
  }
  const ToyModelConfig model = toy_from(cfg);
  std::vector<AblationRow> rows;
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    BenchConfig c = cfg;
    c.seed = cfg.seed + s;
    const TaskSplits splits = make_splits(task_from(c));
    const auto part = schedule_ablation(splits, model, grid, cfg.total_steps, OptimizerConfig{}, c.seed);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  write_loss_csv_header(csv);
  write_ablation_csv(csv, rows, cfg.total_steps);
  const auto summary = summarize_ablation(rows);
  for (std::size_t i = 0; i < summary.llsa_steps.size(); ++i)
    diag << "llsa steps " << summary.llsa_steps[i] << ": median llsa-inference loss "
         << format_double(summary.median_llsa[i]) << '\n';
  diag << "inversions: " << summary.inversions << '\n';
  return 0;
}

int cmd_stream_demo(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag) {
  FrameSequence x;
  if (cfg.input) {
    x = load_frames(*cfg.input);
  } else {
    Rng rng(cfg.seed);
    x = random_frames(cfg.n_frames.value_or(64), cfg.d_k.value_or(8), rng);
  }
  const std::size_t heads = cfg.heads ? cfg.heads->front() : 2;
  if (x.dim() % heads != 0)
    throw ConfigError("stream-demo: frame dim " + std::to_string(x.dim()) + " not divisible by " +
                      std::to_string(heads) + " heads");
  const AttentionKind kind = kind_or(cfg, AttentionKind::llsa);
  const BandSpec band{cfg.look_back.value_or(4), cfg.look_ahead.value_or(2)};
  const AttentionMode mode = kind == AttentionKind::aa ? AttentionMode::acausal() : AttentionMode{kind, band};
  const EncoderStack stack = EncoderStack::random(cfg.layers.value_or(2), x.dim(), heads, 2 * x.dim(), cfg.seed + 1);

  StreamState state = stream_init(stack, mode, cfg.frame_ms / 1000.0);
  std::vector<RealVector> outs;
  std::optional<std::size_t> first_emit;
  for (std::size_t t = 0; t < x.n_frames(); ++t) {
    if (auto y = state.push(x.row(t))) {
      if (!first_emit) first_emit = t + 1;
      outs.push_back(std::move(*y));
    }
  }
  for (auto& y : state.flush()) outs.push_back(std::move(y));
  const FrameSequence offline = stack_forward(stack, x, mode).output;
  double diff = outs.size() == x.n_frames() ? 0.0 : INFINITY;
  if (outs.size() == x.n_frames())
    for (std::size_t t = 0; t < x.n_frames(); ++t)
      for (std::size_t i = 0; i < x.dim(); ++i) diff = std::max(diff, std::abs(outs[t][i] - offline(t, i)));
  std::size_t peak = 0;
  for (std::size_t l = 0; l < state.n_layers(); ++l) peak = std::max(peak, state.peak_retained_frames(l));
  const bool pass = diff <= kStreamTol;
  const auto latency = state.declared_latency_frames();

  csv << "mode,n_frames,dim,layers,look_back,look_ahead,declared_latency,first_emit_push,peak_retained_frames,"
         "max_abs_diff,pass\n";
  csv << to_string(kind) << ',' << x.n_frames() << ',' << x.dim()
      << ',' << state.n_layers() << ',' << band.look_back << ',' << band.look_ahead << ','
      << (latency ? std::to_string(*latency) : "unbounded") << ','
      << (first_emit ? std::to_string(*first_emit) : "flush") << ',' << peak << ',' << format_double(diff) << ','
      << (pass ? 1 : 0) << '\n';
  diag << "streamed vs offline max abs diff: " << format_double(diff) << (pass ? " (ok)" : " (FAIL)") << '\n';
  if (cfg.output_frames && outs.size() == x.n_frames()) {
    FrameSequence y(x.n_frames(), x.dim());
    for (std::size_t t = 0; t < outs.size(); ++t) std::ranges::copy(outs[t], y.row(t).begin());
    save_frames(*cfg.output_frames, y, cfg.precision);
  }
  return pass ? 0 : 1;
}

}  // namespace bsattn
