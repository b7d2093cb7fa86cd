#pragma once

// Toy masked-prediction training: sequences of random sinusoids, spans of
// frames replaced by a learned mask embedding, MSE on the masked frames.
// Used to compare SA / LLSA training schedules at desk scale.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bsattn/block.hpp"
#include "bsattn/tensor_io.hpp"

namespace bsattn {

struct SyntheticTask {
  std::uint64_t seed = 1;
  std::size_t n_sequences = 4096;
  std::size_t n_frames = 32;
  std::size_t dim = 8;
  double mask_prob = 0.1;
  std::size_t mask_span = 4;
  std::size_t n_components = 2;
  double noise = 0.05;

  // Frequencies are integer DFT bins in [1, max_bin].
  std::size_t max_bin = 4;

  // Throws ConfigError on zero sizes, mask_prob outside [0, 1] or max_bin
  // outside [1, n_frames / 2].
  void validate() const;
};

struct SyntheticSequence {
  FrameSequence clean;
  FrameSequence noisy;
  std::vector<bool> masked;
  std::vector<std::size_t> bins;  // one per component
  std::size_t n_masked() const;
};

struct SyntheticDataset {
  SyntheticTask task;
  std::vector<SyntheticSequence> sequences;
  std::size_t size() const { return sequences.size(); }
};

SyntheticDataset gen_synthetic_task(const SyntheticTask& task);

struct ToyModelConfig {
  std::size_t feature_dim = 8;
  std::size_t model_dim = 16;
  std::size_t n_heads = 2;
  std::size_t ffn_dim = 32;
  std::size_t n_layers = 2;
  BandSpec band{8, 2};

  void validate() const;
  AttentionMode mode(AttentionKind kind) const;
};

struct ToyModel {
  ToyModelConfig config;
  Matrix w_in;                  // model_dim x feature_dim
  std::vector<double> b_in;
  std::vector<double> mask_emb;  // replaces masked frames after the input map
  EncoderStack stack;
  Matrix w_out;                 // feature_dim x model_dim
  std::vector<double> b_out;

  static ToyModel init(const ToyModelConfig& config, std::uint64_t seed);
  static ToyModel zeros_like(const ToyModel& m);

  // f(values) over every parameter tensor in a fixed order.
  template <typename F>
  void for_each_parameter(F&& f) {
    f(std::span<double>(w_in.data));
    f(std::span<double>(b_in));
    f(std::span<double>(mask_emb));
    for (auto& b : stack.blocks)
      b.for_each_tensor([&](const std::string&, const std::vector<std::size_t>&, std::span<double> v) { f(v); });
    f(std::span<double>(w_out.data));
    f(std::span<double>(b_out));
  }

  std::vector<NamedTensor> tensors() const;
  static ToyModel from_tensors(const std::vector<NamedTensor>& tensors);
};

// Predictions for every frame (feature_dim wide).
FrameSequence toy_forward(const ToyModel& model, const SyntheticSequence& seq, const AttentionMode& mode);

// Masked MSE: sum over masked frames of |pred - clean|^2 / (n_masked * dim);
// 0 when nothing is masked.
double masked_loss(const FrameSequence& pred, const SyntheticSequence& seq);

// Loss of one sequence and its parameter gradient (accumulated into grad).
double toy_loss_and_grad(const ToyModel& model, const SyntheticSequence& seq, const AttentionMode& mode,
                         ToyModel* grad);

struct ScheduleEntry {
  AttentionKind kind;
  std::size_t steps;
};
using Schedule = std::vector<ScheduleEntry>;

// "sa:150,llsa:50"
Schedule parse_schedule(std::string_view text);
// "sa150_llsa50"
std::string schedule_label(const Schedule& schedule);
std::size_t total_steps(const Schedule& schedule);

// RMSProp without momentum and a global gradient-norm clip.
struct OptimizerConfig {
  double learning_rate = 1e-2;
  double decay = 0.99;
  double eps = 1e-8;
  double clip_norm = 1.0;
  std::size_t batch_size = 32;

  void validate() const;
};

struct StepLoss {
  std::size_t step;
  AttentionKind mode;
  double loss;
};

struct TrainReport {
  std::string schedule;
  std::uint64_t seed = 0;
  std::vector<StepLoss> losses;
  // Filled by run_schedule: held-out loss under each inference mode.
  double eval_initial_sa = 0.0;
  double eval_initial_llsa = 0.0;
  double eval_sa = 0.0;
  double eval_llsa = 0.0;
};

struct TrainResult {
  ToyModel model;
  TrainReport report;
};

// Throws ConfigError on an empty schedule, a zero-step entry or an AA entry,
// TrainingError (with the step) when the loss stops being finite.
TrainResult train(const SyntheticDataset& data, const ToyModel& initial, const Schedule& schedule,
                  const OptimizerConfig& opt, std::uint64_t seed);

// Mean masked loss over the held-out sequences (only frames that are
// masked count). Throws ArgumentError on an empty split and ConfigError if
// the mode does not fit the model.
double evaluate(const ToyModel& model, const SyntheticDataset& split, const AttentionMode& mode);

// Train / eval splits for a task; eval uses a derived seed.
struct TaskSplits {
  SyntheticDataset train;
  SyntheticDataset eval;
};
TaskSplits make_splits(const SyntheticTask& task, std::size_t n_eval = 64);

// Model init, training and evaluation under SA and LLSA inference.
TrainResult run_schedule(const TaskSplits& splits, const ToyModelConfig& config, const Schedule& schedule,
                         const OptimizerConfig& opt, std::uint64_t seed);

struct AblationRow {
  std::size_t llsa_steps;
  std::string schedule;
  std::uint64_t seed;
  double eval_llsa;
  double eval_sa;
};

// For each grid value g: SA for total - g steps, then LLSA for g steps.
// Throws ConfigError on an empty grid or g > total.
std::vector<AblationRow> schedule_ablation(const TaskSplits& splits, const ToyModelConfig& config,
                                           const std::vector<std::size_t>& llsa_step_grid,
                                           std::size_t total, const OptimizerConfig& opt,
                                           std::uint64_t seed);

Schedule ablation_schedule(std::size_t llsa_steps, std::size_t total);

// Per grid value (ascending), the median LLSA-inference loss across seeds,
// and the number of grid steps where that median goes up.
struct AblationSummary {
  std::vector<std::size_t> llsa_steps;
  std::vector<double> median_llsa;
  std::size_t inversions = 0;
};
AblationSummary summarize_ablation(const std::vector<AblationRow>& rows);
double median(std::vector<double> v);

// CSV: schedule,seed,step,mode,loss
void write_loss_csv_header(std::ostream& out);
void write_train_csv(std::ostream& out, const TrainReport& report);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows, std::size_t total);

}  // namespace bsattn
