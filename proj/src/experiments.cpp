#include "bsattn/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "bsattn/detail/kernels.hpp"
#include "bsattn/errors.hpp"

namespace bsattn {

namespace {

constexpr std::uint64_t kEvalSeedSalt = 0xE7A1'5EEDull;
constexpr std::uint64_t kBatchSeedSalt = 0xBA7C'4000ull;

std::string fmt_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void SyntheticTask::validate() const {
  if (n_sequences == 0 || n_frames == 0 || dim == 0 || n_components == 0)
    throw ConfigError("SyntheticTask: sizes must be >= 1");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) throw ConfigError("SyntheticTask: mask_prob outside [0, 1]");
  if (mask_span == 0) throw ConfigError("SyntheticTask: mask_span must be >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("SyntheticTask: bad noise level");
  if (max_bin == 0 || 2 * max_bin > n_frames) throw ConfigError("SyntheticTask: max_bin outside [1, n_frames / 2]");
}

std::size_t SyntheticSequence::n_masked() const {
  std::size_t n = 0;
  for (bool m : masked) n += m ? 1 : 0;
  return n;
}

SyntheticDataset gen_synthetic_task(const SyntheticTask& task) {
  task.validate();
  Rng rng(task.seed);
  const std::size_t n = task.n_frames;
  const double two_pi = 2.0 * std::numbers::pi;
  SyntheticDataset ds;
  ds.task = task;
  for (std::size_t s = 0; s < task.n_sequences; ++s) {
    SyntheticSequence seq{FrameSequence(n, task.dim), FrameSequence(n, task.dim), std::vector<bool>(n, false), {}};
    for (std::size_t j = 0; j < task.n_components; ++j) {
      const std::size_t bin = 1 + static_cast<std::size_t>(rng.below(task.max_bin));
      seq.bins.push_back(bin);
      for (std::size_t i = 0; i < task.dim; ++i) {
        const double amp = rng.uniform(0.5, 1.5);
        const double phase = rng.uniform(0.0, two_pi);
        for (std::size_t t = 0; t < n; ++t)
          seq.clean(t, i) += amp * std::sin(two_pi * static_cast<double>(bin * t) / static_cast<double>(n) + phase);
      }
    }
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t i = 0; i < task.dim; ++i) seq.noisy(t, i) = seq.clean(t, i) + task.noise * rng.normal();
    for (std::size_t t = 0; t < n; ++t) {
      if (rng.uniform() < task.mask_prob)
        for (std::size_t u = t; u < std::min(n, t + task.mask_span); ++u) seq.masked[u] = true;
    }
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

void ToyModelConfig::validate() const {
  if (feature_dim == 0 || n_layers == 0) throw ConfigError("ToyModelConfig: sizes must be >= 1");
  if (n_heads == 0 || model_dim % n_heads != 0)
    throw ConfigError("ToyModelConfig: model_dim must be divisible by n_heads");
  if (ffn_dim == 0) throw ConfigError("ToyModelConfig: ffn_dim must be >= 1");
}

AttentionMode ToyModelConfig::mode(AttentionKind kind) const {
  if (kind == AttentionKind::aa) return AttentionMode::acausal();
  return {kind, band};
}

ToyModel ToyModel::init(const ToyModelConfig& config, std::uint64_t seed) {
  config.validate();
  ToyModel m;
  m.config = config;
  Rng rng(seed);
  m.w_in = Matrix(config.model_dim, config.feature_dim);
  rng.fill_normal(m.w_in.data, 1.0 / std::sqrt(static_cast<double>(config.feature_dim)));
  m.b_in.assign(config.model_dim, 0.0);
  m.mask_emb.assign(config.model_dim, 0.0);
  rng.fill_normal(m.mask_emb, 1.0);
  m.stack = EncoderStack::random(config.n_layers, config.model_dim, config.n_heads, config.ffn_dim, rng.next_u64());
  m.w_out = Matrix(config.feature_dim, config.model_dim);
  rng.fill_normal(m.w_out.data, 1.0 / std::sqrt(static_cast<double>(config.model_dim)));
  m.b_out.assign(config.feature_dim, 0.0);
  return m;
}

ToyModel ToyModel::zeros_like(const ToyModel& src) {
  ToyModel m = src;
  m.for_each_parameter([](std::span<double> v) { std::ranges::fill(v, 0.0); });
  return m;
}

std::vector<NamedTensor> ToyModel::tensors() const {
  const auto& c = config;
  std::vector<NamedTensor> out;
  out.push_back({"toy.meta",
                 {7},
                 {double(c.feature_dim), double(c.model_dim), double(c.n_heads), double(c.ffn_dim),
                  double(c.n_layers), double(c.band.look_back), double(c.band.look_ahead)}});
  auto mat = [&](const char* name, const Matrix& m) {
    out.push_back({name, {m.rows, m.cols}, m.data});
  };
  auto vec = [&](const char* name, const std::vector<double>& v) { out.push_back({name, {v.size()}, v}); };
  mat("in.w", w_in);
  vec("in.b", b_in);
  vec("mask_emb", mask_emb);
  for (auto& t : stack_tensors(stack, "stack.")) out.push_back(std::move(t));
  mat("out.w", w_out);
  vec("out.b", b_out);
  return out;
}

ToyModel ToyModel::from_tensors(const std::vector<NamedTensor>& tensors) {
  const auto& meta = find_tensor(tensors, "toy.meta");
  if (meta.values.size() != 7) throw FormatError("toy.meta must hold 7 values");
  for (double v : meta.values)
    if (!(v >= 0.0 && v <= 1e9) || v != std::floor(v)) throw FormatError("bad toy.meta value");
  auto at = [&](std::size_t i) { return static_cast<std::size_t>(meta.values[i]); };
  ToyModelConfig c{at(0), at(1), at(2), at(3), at(4), BandSpec{at(5), at(6)}};
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad toy model config: ") + e.what());
  }
  ToyModel m;
  m.config = c;
  auto load = [&](const char* name, std::vector<double>& dst, std::vector<std::uint64_t> dims) {
    const auto& t = find_tensor(tensors, name);
    if (t.dims != dims) throw FormatError(std::string("tensor ") + name + " has the wrong shape");
    dst = t.values;
  };
  m.w_in = Matrix(c.model_dim, c.feature_dim);
  load("in.w", m.w_in.data, {c.model_dim, c.feature_dim});
  load("in.b", m.b_in, {c.model_dim});
  load("mask_emb", m.mask_emb, {c.model_dim});
  m.stack = stack_from_tensors(tensors, "stack.");
  if (m.stack.n_layers() != c.n_layers || m.stack.model_dim() != c.model_dim)
    throw FormatError("stack tensors disagree with toy.meta");
  m.w_out = Matrix(c.feature_dim, c.model_dim);
  load("out.w", m.w_out.data, {c.feature_dim, c.model_dim});
  load("out.b", m.b_out, {c.feature_dim});
  for (const auto* v : {&m.w_in.data, &m.b_in, &m.mask_emb, &m.w_out.data, &m.b_out})
    for (double x : *v)
      if (!std::isfinite(x)) throw FormatError("toy model holds a non-finite parameter");
  return m;
}

namespace {

FrameSequence embed(const ToyModel& model, const SyntheticSequence& seq) {
  const auto& c = model.config;
  if (seq.noisy.dim() != c.feature_dim)
    throw ConfigError("sequence dim " + std::to_string(seq.noisy.dim()) + " != model feature_dim " +
                      std::to_string(c.feature_dim));
  FrameSequence h(seq.noisy.n_frames(), c.model_dim);
  for (std::size_t t = 0; t < h.n_frames(); ++t) {
    auto row = h.row(t);
    if (seq.masked[t]) {
      std::ranges::copy(model.mask_emb, row.begin());
    } else {
      matvec(model.w_in, seq.noisy.row(t), row);
      for (std::size_t i = 0; i < c.model_dim; ++i) row[i] += model.b_in[i];
    }
  }
  return h;
}

FrameSequence readout(const ToyModel& model, const FrameSequence& y) {
  FrameSequence pred(y.n_frames(), model.config.feature_dim);
  for (std::size_t t = 0; t < y.n_frames(); ++t) {
    auto row = pred.row(t);
    matvec(model.w_out, y.row(t), row);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] += model.b_out[i];
  }
  return pred;
}

void check_mode(const ToyModel& model, const AttentionMode& mode) {
  mode.validate();
  if (mode.band && *mode.band != model.config.band)
    throw ConfigError("mode " + mode.describe() + " does not match the model band");
}

}  // namespace

FrameSequence toy_forward(const ToyModel& model, const SyntheticSequence& seq, const AttentionMode& mode) {
  check_mode(model, mode);
  return readout(model, stack_forward(model.stack, embed(model, seq), mode).output);
}

double masked_loss(const FrameSequence& pred, const SyntheticSequence& seq) {
  const std::size_t n_masked = seq.n_masked();
  if (n_masked == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.n_frames(); ++t) {
    if (!seq.masked[t]) continue;
    for (std::size_t i = 0; i < pred.dim(); ++i) {
      const double e = pred(t, i) - seq.clean(t, i);
      sum += e * e;
    }
  }
  return sum / static_cast<double>(n_masked * pred.dim());
}

double toy_loss_and_grad(const ToyModel& model, const SyntheticSequence& seq, const AttentionMode& mode,
                         ToyModel* grad) {
  check_mode(model, mode);
  const std::size_t n_masked = seq.n_masked();
  if (n_masked == 0) return 0.0;
  const FrameSequence h = embed(model, seq);
  const StackForwardResult fwd = stack_forward(model.stack, h, mode);
  const FrameSequence pred = readout(model, fwd.output);
  const double loss = masked_loss(pred, seq);
  if (grad == nullptr) return loss;

  const std::size_t n = h.n_frames();
  const double norm = 2.0 / static_cast<double>(n_masked * pred.dim());
  FrameSequence d_y(n, model.config.model_dim);
  std::vector<double> d_pred(pred.dim());
  for (std::size_t t = 0; t < n; ++t) {
    if (!seq.masked[t]) continue;
    for (std::size_t i = 0; i < pred.dim(); ++i) {
      d_pred[i] = norm * (pred(t, i) - seq.clean(t, i));
      grad->b_out[i] += d_pred[i];
    }
    outer_add(grad->w_out, d_pred, fwd.output.row(t));
    matvec_transposed_add(model.w_out, d_pred, d_y.row(t));
  }
  StackBackwardResult back = stack_backward(model.stack, fwd, d_y);
  for (std::size_t l = 0; l < back.d_blocks.size(); ++l) add_scaled(grad->stack.blocks[l], 1.0, back.d_blocks[l]);
  for (std::size_t t = 0; t < n; ++t) {
    auto dh = back.d_input.row(t);
    if (seq.masked[t]) {
      detail::axpy(1.0, dh.data(), grad->mask_emb.data(), dh.size());
    } else {
      outer_add(grad->w_in, dh, seq.noisy.row(t));
      detail::axpy(1.0, dh.data(), grad->b_in.data(), dh.size());
    }
  }
  return loss;
}

Schedule parse_schedule(std::string_view text) {
  Schedule out;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("schedule entry '" + item + "' is not mode:steps");
    const AttentionKind kind = parse_attention_kind(item.substr(0, colon));
    const std::string count = item.substr(colon + 1);
    std::size_t used = 0;
    unsigned long long steps = 0;
    try {
      steps = std::stoull(count, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != count.size() || count.front() == '-')
      throw ConfigError("schedule entry '" + item + "' has a bad step count");
    out.push_back({kind, static_cast<std::size_t>(steps)});
  }
  if (out.empty()) throw ConfigError("empty schedule");
  return out;
}

std::string schedule_label(const Schedule& schedule) {
  std::string s;
  for (const auto& e : schedule) {
    if (!s.empty()) s += '_';
    s += std::string(to_string(e.kind)) + std::to_string(e.steps);
  }
  return s;
}

std::size_t total_steps(const Schedule& schedule) {
  std::size_t n = 0;
  for (const auto& e : schedule) n += e.steps;
  return n;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("decay must be in (0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
}

TrainResult train(const SyntheticDataset& data, const ToyModel& initial, const Schedule& schedule,
                  const OptimizerConfig& opt, std::uint64_t seed) {
  opt.validate();
  if (schedule.empty()) throw ConfigError("train: empty schedule");
  for (const auto& e : schedule) {
    if (e.steps == 0) throw ConfigError("train: schedule entry with zero steps");
    if (e.kind == AttentionKind::aa) throw ConfigError("train: schedules take banded modes only");
  }
  if (data.sequences.empty()) throw ArgumentError("train: empty dataset");

  TrainResult res{initial, {}};
  res.report.schedule = schedule_label(schedule);
  res.report.seed = seed;
  ToyModel& model = res.model;

  std::vector<std::span<double>> params;
  model.for_each_parameter([&](std::span<double> v) { params.push_back(v); });
  ToyModel grad = ToyModel::zeros_like(model);
  std::vector<std::span<double>> grads;
  grad.for_each_parameter([&](std::span<double> v) { grads.push_back(v); });
  ToyModel second = ToyModel::zeros_like(model);
  std::vector<std::span<double>> sq;
  second.for_each_parameter([&](std::span<double> v) { sq.push_back(v); });

  Rng batches(seed ^ kBatchSeedSalt);
  std::size_t step = 0;
  double decay_pow = 1.0;
  for (const auto& entry : schedule) {
    const AttentionMode mode = model.config.mode(entry.kind);
    for (std::size_t k = 0; k < entry.steps; ++k) {
      ++step;
      for (auto g : grads) std::ranges::fill(g, 0.0);
      double loss = 0.0;
      for (std::size_t b = 0; b < opt.batch_size; ++b) {
        const auto& seq = data.sequences[batches.below(data.sequences.size())];
        loss += toy_loss_and_grad(model, seq, mode, &grad);
      }
      const double inv = 1.0 / static_cast<double>(opt.batch_size);
      loss *= inv;
      if (!std::isfinite(loss)) throw TrainingError("non-finite training loss", step);
      double norm2 = 0.0;
      for (auto g : grads)
        for (double& x : g) {
          x *= inv;
          norm2 += x * x;
        }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) throw TrainingError("non-finite gradient", step);
      const double clip = norm > opt.clip_norm ? opt.clip_norm / norm : 1.0;
      decay_pow *= opt.decay;
      const double correction = 1.0 - decay_pow;
      for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].size(); ++i) {
          const double g = grads[p][i] * clip;
          sq[p][i] = opt.decay * sq[p][i] + (1.0 - opt.decay) * g * g;
          params[p][i] -= opt.learning_rate * g / (std::sqrt(sq[p][i] / correction) + opt.eps);
        }
      }
      res.report.losses.push_back({step, entry.kind, loss});
    }
  }
  return res;
}

double evaluate(const ToyModel& model, const SyntheticDataset& split, const AttentionMode& mode) {
  if (split.sequences.empty()) throw ArgumentError("evaluate: empty split");
  check_mode(model, mode);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& seq : split.sequences) {
    const std::size_t m = seq.n_masked();
    if (m == 0) continue;
    sum += masked_loss(toy_forward(model, seq, mode), seq) * static_cast<double>(m);
    count += m;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

TaskSplits make_splits(const SyntheticTask& task, std::size_t n_eval) {
  SyntheticTask eval = task;
  eval.seed = task.seed ^ kEvalSeedSalt;
  eval.n_sequences = n_eval;
  return {gen_synthetic_task(task), gen_synthetic_task(eval)};
}

TrainResult run_schedule(const TaskSplits& splits, const ToyModelConfig& config, const Schedule& schedule,
                         const OptimizerConfig& opt, std::uint64_t seed) {
  const ToyModel init = ToyModel::init(config, seed);
  const double init_sa = evaluate(init, splits.eval, config.mode(AttentionKind::sa));
  const double init_llsa = evaluate(init, splits.eval, config.mode(AttentionKind::llsa));
  TrainResult res = train(splits.train, init, schedule, opt, seed);
  res.report.eval_initial_sa = init_sa;
  res.report.eval_initial_llsa = init_llsa;
  res.report.eval_sa = evaluate(res.model, splits.eval, config.mode(AttentionKind::sa));
  res.report.eval_llsa = evaluate(res.model, splits.eval, config.mode(AttentionKind::llsa));
  return res;
}

Schedule ablation_schedule(std::size_t llsa_steps, std::size_t total) {
  if (llsa_steps > total) throw ConfigError("ablation: LLSA steps exceed the total");
  Schedule s;
  if (llsa_steps < total) s.push_back({AttentionKind::sa, total - llsa_steps});
  if (llsa_steps > 0) s.push_back({AttentionKind::llsa, llsa_steps});
  return s;
}

std::vector<AblationRow> schedule_ablation(const TaskSplits& splits, const ToyModelConfig& config,
                                           const std::vector<std::size_t>& llsa_step_grid,
                                           std::size_t total, const OptimizerConfig& opt,
                                           std::uint64_t seed) {
  if (llsa_step_grid.empty()) throw ConfigError("ablation: empty grid");
  if (total == 0) throw ConfigError("ablation: total steps must be >= 1");
  std::vector<AblationRow> rows;
  for (std::size_t g : llsa_step_grid) {
    const Schedule s = ablation_schedule(g, total);
    const TrainResult r = run_schedule(splits, config, s, opt, seed);
    rows.push_back({g, schedule_label(s), seed, r.report.eval_llsa, r.report.eval_sa});
  }
  return rows;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ArgumentError("median of an empty set");
  std::ranges::sort(v);
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

AblationSummary summarize_ablation(const std::vector<AblationRow>& rows) {
  AblationSummary s;
  for (const auto& r : rows)
    if (std::ranges::find(s.llsa_steps, r.llsa_steps) == s.llsa_steps.end()) s.llsa_steps.push_back(r.llsa_steps);
  std::ranges::sort(s.llsa_steps);
  for (std::size_t g : s.llsa_steps) {
    std::vector<double> losses;
    for (const auto& r : rows)
      if (r.llsa_steps == g) losses.push_back(r.eval_llsa);
    s.median_llsa.push_back(median(losses));
  }
  for (std::size_t i = 1; i < s.median_llsa.size(); ++i)
    if (s.median_llsa[i] > s.median_llsa[i - 1]) ++s.inversions;
  return s;
}

void write_loss_csv_header(std::ostream& out) { out << "schedule,seed,step,mode,loss\n"; }

void write_train_csv(std::ostream& out, const TrainReport& report) {
  for (const auto& l : report.losses)
    out << report.schedule << ',' << report.seed << ',' << l.step << ',' << to_string(l.mode) << ','
        << fmt_double(l.loss) << '\n';
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows, std::size_t total) {
  for (const auto& r : rows)
    out << r.schedule << ',' << r.seed << ',' << total << ",eval_llsa," << fmt_double(r.eval_llsa) << '\n';
}

}  // namespace bsattn
