#pragma once

// Command implementations behind the bsattn CLI. Each writes CSV to `csv`,
// diagnostics to `diag`, and returns the process exit status (0 iff every
// tolerance held).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bsattn/block.hpp"
#include "bsattn/tensor_io.hpp"

namespace bsattn {

struct BenchConfig {
  std::optional<std::string> mode;  // aa | maa | sa | llsa
  std::optional<std::size_t> n_frames;
  std::optional<std::size_t> d_k;
  std::optional<std::vector<std::size_t>> heads;
  std::optional<std::size_t> look_back;
  std::optional<std::size_t> look_ahead;
  std::optional<std::size_t> layers;
  double frame_ms = 20.0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> repeats;
  bool parallel = false;
  Precision precision = Precision::f64;

  std::optional<std::size_t> window;
  bool inject_fault = false;
  std::string schedule = "sa:150,llsa:50";
  std::vector<std::size_t> llsa_grid{0, 25, 50, 100};  // percent of total steps
  std::size_t seeds = 3;
  std::size_t total_steps = 1000;
  std::optional<std::string> input;
  std::optional<std::string> output_frames;
  std::optional<std::string> checkpoint;
  bool deterministic = false;
};

int cmd_equivalence(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag);
int cmd_gradcheck(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag);
int cmd_bench_memory(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag);
int cmd_latency(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag);
int cmd_train_toy(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag);
int cmd_ablation(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag);
int cmd_stream_demo(const BenchConfig& cfg, std::ostream& csv, std::ostream& diag);

// Shortest round-trip decimal form.
std::string format_double(double v);

// Oracle suites shared by the CLI and the acceptance runner.
struct EquivalenceRow {
  std::string suite;  // "sa_vs_maa" | "llsa_dup"
  std::size_t n_frames, dim, look_back, look_ahead;
  std::uint64_t seed;
  std::size_t channel;  // llsa_dup only
  double forward_err;
  double backward_err;  // sa_vs_maa only
  bool pass;
};

// N in {4,8,16,32}, d in {1,2,4}, A,B in {0,1,2,8}, seeds; forward <= 1e-10,
// backward <= 1e-8. With fault injection one probability of the first
// case is corrupted before the values are mixed.
std::vector<EquivalenceRow> sa_maa_grid(std::size_t n_seeds, std::uint64_t seed0, bool inject_fault);
// A, B <= 4, N in {1,..,32 sampled}; every channel vs SA(B+A-c, c) within 1e-12.
std::vector<EquivalenceRow> llsa_duplication_grid(std::uint64_t seed0);

struct GradcheckRow {
  std::string kernel;  // "sa" | "llsa" | "block_sa" | "block_llsa"
  std::size_t case_index;
  std::uint64_t seed;
  std::size_t n_frames, dim, look_back, look_ahead;
  std::size_t checked;      // coordinates above the magnitude floor
  double max_rel_err;
  std::string worst;        // "<tensor>[index]"
  bool pass;
};

// Central differences with h = 1e-6 on <G, f(inputs)> for random G.
// Relative error |a - n| / max(|a|, |n|) over coordinates with |n| > 1e-8.
std::vector<GradcheckRow> gradcheck_suite(std::size_t cases_per_kernel, std::uint64_t seed0);

struct BenchRecord {
  std::string mode;
  std::size_t n_frames, n_heads, d_k, look_back, look_ahead, window;
  std::uint64_t score_elements;
  std::uint64_t peak_score_bytes;
  double wall_ms;
  std::string repeat;  // index or "mean"
};

struct MemoryGrid {
  std::size_t n_frames = 1000;
  std::size_t d_k = 64;
  std::vector<std::size_t> heads{8, 16};
  std::vector<std::size_t> windows;  // default 10..490 step 10
  std::vector<std::string> modes{"sa", "maa"};
  std::size_t repeats = 5;
  Precision precision = Precision::f32;
  std::uint64_t seed = 0;
  bool parallel = false;
};

std::vector<std::size_t> default_windows();
// Window w: A = (w - 1) / 2, B = w - 1 - A.
BandSpec split_window(std::size_t window);
std::vector<BenchRecord> run_memory_grid(const MemoryGrid& grid);

// Least-squares fit y = a + b x; returns R^2 (1 when y is constant and fit exactly).
double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace bsattn
