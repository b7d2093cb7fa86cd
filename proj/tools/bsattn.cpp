// bsattn: oracle suites, gradient checks, memory and latency reports, toy
// training and the streaming demo. CSV goes to stdout (or --out),
// diagnostics to stderr.

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "bsattn/bench.hpp"

namespace {

using Command = std::function<int(const bsattn::BenchConfig&, std::ostream&, std::ostream&)>;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Banded streaming attention: oracles, benchmarks, toy training"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value file (# comments); keys are long option names");

  bsattn::BenchConfig cfg;
  std::string precision = "f64";
  std::optional<std::string> out_path;

  app.add_option("--mode", cfg.mode, "attention mode: aa, maa, sa, llsa");
  app.add_option("--nt", cfg.n_frames, "number of frames");
  app.add_option("--dk", cfg.d_k, "key dimension per head (frame dim for stream-demo)");
  app.add_option("--heads", cfg.heads, "head counts, comma separated")->delimiter(',');
  app.add_option("--lookback", cfg.look_back, "look-back frames B");
  app.add_option("--lookahead", cfg.look_ahead, "look-ahead frames A");
  app.add_option("--layers", cfg.layers, "encoder layers");
  app.add_option("--frame-ms", cfg.frame_ms, "frame duration in milliseconds")->capture_default_str();
  app.add_option("--seed", cfg.seed, "base seed")->capture_default_str();
  app.add_option("--repeats", cfg.repeats, "repeats (bench-memory), seeds (equivalence), cases (gradcheck)");
  app.add_option("--out", out_path, "CSV output path (default stdout)");
  app.add_flag("--parallel", cfg.parallel, "bench-memory: run grid points on worker threads");
  app.add_option("--precision", precision, "f32 or f64 (bench-memory kernels, file outputs)")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  app.add_option("--window", cfg.window, "window size A+B+1; A=(w-1)/2");
  app.add_flag("--inject-fault", cfg.inject_fault, "equivalence: corrupt one probability (harness self-test)");
  app.add_option("--schedule", cfg.schedule, "train-toy schedule, e.g. sa:150,llsa:50")->join(',')->capture_default_str();
  app.add_option("--llsa-grid", cfg.llsa_grid, "ablation LLSA step shares in percent")->delimiter(',');
  app.add_option("--seeds", cfg.seeds, "ablation seeds")->capture_default_str();
  app.add_option("--total-steps", cfg.total_steps, "ablation steps per run")->capture_default_str();
  app.add_option("--input", cfg.input, "stream-demo input frames (BSAF)");
  app.add_option("--output-frames", cfg.output_frames, "stream-demo streamed outputs (BSAF)");
  app.add_option("--checkpoint", cfg.checkpoint, "train-toy: write the trained model (BSAT)");
  app.add_flag("--deterministic", cfg.deterministic, "write wall_ms as 0 so CSV is byte-stable");

  const std::map<std::string, std::pair<std::string, Command>> commands{
      {"equivalence", {"SA vs MAA and LLSA duplication oracle grids", bsattn::cmd_equivalence}},
      {"gradcheck", {"backward passes vs central finite differences", bsattn::cmd_gradcheck}},
      {"bench-memory", {"score-buffer memory and time, SA vs MAA", bsattn::cmd_bench_memory}},
      {"latency", {"total look-ahead latency per mode", bsattn::cmd_latency}},
      {"train-toy", {"train the toy masked-prediction model", bsattn::cmd_train_toy}},
      {"ablation", {"SA/LLSA step-share ablation", bsattn::cmd_ablation}},
      {"stream-demo", {"push/flush a sequence and compare with offline", bsattn::cmd_stream_demo}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first);

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.precision = bsattn::parse_precision(precision);
    std::ofstream file;
    if (out_path) {
      file.open(*out_path);
      if (!file) {
        std::cerr << "error: cannot open " << *out_path << " for writing\n";
        return 2;
      }
    }
    std::ostream& csv = out_path ? static_cast<std::ostream&>(file) : std::cout;
    for (const auto* sub : app.get_subcommands()) return commands.at(sub->get_name()).second(cfg, csv, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
