#include "gsfuse/trainer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "gsfuse/alignment.hpp"
#include "gsfuse/config.hpp"
#include "gsfuse/datagen.hpp"
#include "gsfuse/errors.hpp"
#include "gsfuse/fusion.hpp"
#include "gsfuse/ops.hpp"

namespace gsfuse::train {

using nn::GroupSet;
using nn::ParamGroup;

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::TsOnly: return "ts_only";
    case Stage::TextOnly: return "text_only";
    case Stage::Multimodal: return "multimodal";
  }
  return "?";
}

Stage stage_from_name(std::string_view name) {
  for (Stage s : {Stage::TsOnly, Stage::TextOnly, Stage::Multimodal}) {
    if (stage_name(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "' (valid: ts_only, text_only, multimodal)");
}

GroupSet stage_groups(Stage stage) {
  switch (stage) {
    case Stage::TsOnly: return {ParamGroup::TsProjection, ParamGroup::Decoder, ParamGroup::Head};
    case Stage::TextOnly: return {ParamGroup::TextProjection, ParamGroup::Decoder, ParamGroup::Head};
    case Stage::Multimodal: return GroupSet::all();
  }
  return GroupSet::none();
}

std::size_t TrainConfig::epochs(Stage stage) const {
  switch (stage) {
    case Stage::TsOnly: return epochs_ts_only;
    case Stage::TextOnly: return epochs_text_only;
    case Stage::Multimodal: return epochs_multimodal;
  }
  return 0;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (contrastive terms need in-batch negatives)");
  if (!(lambda_align >= 0.0) || !(lambda_gate >= 0.0)) throw ConfigError("train: loss weights must be >= 0");
  if (!(adam.lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("train: Adam eps must be positive");
  if (!(grad_clip >= 0.0)) throw ConfigError("train: grad_clip must be >= 0");
  if (stage1_stride == 0) throw ConfigError("train: stage1_stride must be >= 1");
}

AdamState AdamState::zeros(const nn::ParamStore& store) {
  AdamState s;
  for (const auto& p : store) {
    s.m.push_back(Tensor::zeros_like(p.value));
    s.v.push_back(Tensor::zeros_like(p.value));
  }
  s.steps.assign(store.size(), 0);
  return s;
}

void adam_step(nn::ParamStore& store, AdamState& state, std::span<const Tensor> grads, GroupSet trainable,
               const AdamConfig& config) {
  if (grads.size() != store.size() || state.m.size() != store.size()) {
    throw DimensionError("adam: gradient/moment count does not match the parameter store");
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(i);
    if (!trainable.contains(p.group)) continue;
    const auto g = grads[i].data();
    auto w = p.value.data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    if (g.size() != w.size()) throw DimensionError("adam: gradient shape mismatch for " + p.name);
    const auto t = static_cast<double>(++state.steps[i]);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      w[k] -= config.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.eps);
    }
  }
}

double clip_grad_norm(const nn::ParamStore& store, std::span<Tensor> grads, GroupSet trainable, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!trainable.contains(store.at(i).group)) continue;
    for (double g : grads[i].data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (!trainable.contains(store.at(i).group)) continue;
      for (double& g : grads[i].data()) g *= f;
    }
  }
  return norm;
}

TrainState TrainState::fresh(const ModelConfig& config, std::uint64_t seed) {
  GsFuseModel model(config, mix_seed(seed, 0x6d6f64656c));
  AdamState adam = AdamState::zeros(model.params());
  return TrainState{std::move(model), std::move(adam), Stage::TsOnly, 0, 0, seed, Rng(mix_seed(seed, 0x7368756666))};
}

Var forecast_loss(std::span<const Var> predictions, std::span<const Var> targets) {
  if (predictions.size() != targets.size()) throw DimensionError("forecast loss: prediction/target counts differ");
  if (predictions.empty()) throw DataError("forecast loss: empty batch");
  Var mse_sum, mae_sum;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].shape() != targets[i].shape()) {
      throw DimensionError("forecast loss: prediction " + shape_string(predictions[i].shape()) + " vs target " +
                           shape_string(targets[i].shape()));
    }
    Var e2 = ops::mse(predictions[i], targets[i]);
    Var e1 = ops::mae(predictions[i], targets[i]);
    mse_sum = i == 0 ? e2 : ops::add(mse_sum, e2);
    mae_sum = i == 0 ? e1 : ops::add(mae_sum, e1);
  }
  const double inv = 1.0 / static_cast<double>(predictions.size());
  return ops::add(ops::scale(mse_sum, inv), ops::scale(mae_sum, inv));
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Var> target_vars(Tape& tape, std::span<const EncodedInstance* const> batch) {
  std::vector<Var> out;
  out.reserve(batch.size());
  for (const auto* inst : batch) out.push_back(tape.constant(inst->target));
  return out;
}

Var single_modality_forecast(Stage stage, nn::Binder& b, const GsFuseModel& model,
                             std::span<const EncodedInstance* const> batch) {
  std::vector<Var> preds;
  preds.reserve(batch.size());
  for (const auto* inst : batch) {
    Var hidden = stage == Stage::TsOnly ? model.project_ts(b, inst->ts_raw) : model.project_text(b, inst->text_raw);
    preds.push_back(model.decoder().forward(b, alignment::pool(hidden)));
  }
  return forecast_loss(preds, target_vars(b.tape(), batch));
}

// Joint-stage forecasting term; `traces` receives the per-instance passes.
Var joint_forecast(nn::Binder& b, const GsFuseModel& model, std::span<const EncodedInstance* const> batch,
                   bool restricted, std::vector<InstanceTrace>& traces) {
  traces.clear();
  std::vector<Var> full, ts;
  for (const auto* inst : batch) {
    traces.push_back(model.forward_instance(b, *inst));
    full.push_back(traces.back().utility.forecast_full);
    ts.push_back(traces.back().utility.forecast_ts);
  }
  const auto targets = target_vars(b.tape(), batch);
  Var loss = forecast_loss(full, targets);
  if (restricted) loss = ops::add(loss, forecast_loss(ts, targets));
  return loss;
}

void check_finite(const LossBundle& l, std::string_view where) {
  for (double v : {l.forecast, l.ctr, l.tok, l.gate, l.total}) {
    if (!std::isfinite(v)) throw NumericalError(std::string(where) + ": non-finite loss");
  }
}

}  // namespace

Objective stage_objective(Stage stage, nn::Binder& b, const GsFuseModel& model,
                          std::span<const EncodedInstance* const> batch, const TrainConfig& config) {
  if (batch.empty()) throw DataError("objective: empty batch");
  Objective out;
  if (stage != Stage::Multimodal) {
    out.total = out.terms.forecast = single_modality_forecast(stage, b, model, batch);
    out.losses.forecast = out.losses.total = out.total.item();
    out.losses.mean_openness = kNaN;
    return out;
  }
  if (batch.size() < 2) throw ConfigError("joint objective needs at least 2 instances per batch");
  const auto& mc = model.config();
  std::vector<InstanceTrace> traces;
  Var forecast = joint_forecast(b, model, batch, config.train_restricted_branch, traces);

  std::vector<Var> s, t, openness;
  std::vector<alignment::TokenAlignmentInput> tokens;
  std::vector<double> deltas;
  for (const auto& tr : traces) {
    s.push_back(tr.s_attended);
    t.push_back(tr.t);
    tokens.push_back({tr.z_text, tr.z_ts, tr.salience});
    openness.push_back(tr.gate.openness);
    deltas.push_back(tr.utility.delta);
  }
  const auto align = alignment::alignment_loss(s, t, tokens, mc.tau_ctr, mc.tau_al, mc.tau_nce);
  const auto resp = fusion::responsibility(deltas, mc.gate);
  Var gate = fusion::gate_loss(openness, resp.r);

  out.total = ops::add(ops::add(forecast, ops::scale(ops::add(align.ctr, align.tok), config.lambda_align)),
                       ops::scale(gate, config.lambda_gate));
  out.terms = {forecast, align.ctr, align.tok, gate};
  out.losses.forecast = forecast.item();
  out.losses.ctr = align.ctr.item();
  out.losses.tok = align.tok.item();
  out.losses.gate = gate.item();
  out.losses.total = out.total.item();
  double mean_open = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    GateOutcome g;
    g.id = batch[i]->id;
    g.category = batch[i]->category;
    const auto alpha = traces[i].gate.text.value().data();
    g.alpha_text.assign(alpha.begin(), alpha.end());
    g.openness = openness[i].item();
    g.delta = deltas[i];
    g.r = resp.r[i];
    mean_open += g.openness;
    out.gates.push_back(std::move(g));
  }
  out.losses.mean_openness = mean_open / static_cast<double>(batch.size());
  return out;
}

void TrainLog::write_csv(std::ostream& out) const {
  out << "stage,epoch,step,L_forecast,L_ctr,L_tok,L_gate,L_total,mean_alpha\n";
  char buf[512];
  for (const auto& r : steps) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  std::string(stage_name(r.stage)).c_str(), r.epoch, static_cast<unsigned long long>(r.step),
                  r.losses.forecast, r.losses.ctr, r.losses.tok, r.losses.gate, r.losses.total,
                  r.losses.mean_openness);
    out << buf;
  }
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log " + path.string());
  write_csv(out);
}

namespace {

struct StageData {
  std::vector<EncodedInstance> items;
};

StageData encode_for_stage(const GsFuseModel& model, Stage stage, const Dataset& data, std::size_t stride) {
  StageData out;
  if (stage == Stage::TsOnly && stride > 0) {
    for (const auto& w : datagen::sliding_windows(data, stride)) {
      out.items.push_back(model.encode_series(w.input, w.target));
    }
  } else {
    out.items = model.encode_all(data);
  }
  return out;
}

std::vector<const EncodedInstance*> pointers(const std::vector<EncodedInstance>& items) {
  std::vector<const EncodedInstance*> out;
  out.reserve(items.size());
  for (const auto& e : items) out.push_back(&e);
  return out;
}

double mean_forecast(const GsFuseModel& model, Stage stage, const std::vector<EncodedInstance>& items,
                     const TrainConfig& config) {
  if (items.empty()) return kNaN;
  const auto ptrs = pointers(items);
  double acc = 0.0;
  for (std::size_t lo = 0; lo < ptrs.size(); lo += config.batch_size) {
    const std::size_t n = std::min(config.batch_size, ptrs.size() - lo);
    std::span<const EncodedInstance* const> batch(ptrs.data() + lo, n);
    Tape tape;
    nn::Binder b(tape, model.params(), GroupSet::none());
    Var loss;
    if (stage == Stage::Multimodal) {
      std::vector<InstanceTrace> traces;
      loss = joint_forecast(b, model, batch, config.train_restricted_branch, traces);
    } else {
      loss = single_modality_forecast(stage, b, model, batch);
    }
    acc += loss.item() * static_cast<double>(n);
  }
  return acc / static_cast<double>(items.size());
}

// Shuffled batches; a trailing singleton joins the previous batch so the
// contrastive terms always see a negative.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t lo = 0; lo < n; lo += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(lo),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, lo + batch)));
  }
  if (out.size() >= 2 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

std::vector<Tensor> frozen_snapshot(const nn::ParamStore& store, GroupSet trainable) {
  std::vector<Tensor> snap;
  for (const auto& p : store) snap.push_back(trainable.contains(p.group) ? Tensor() : p.value);
  return snap;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

bool audit_frozen(const nn::ParamStore& store, GroupSet trainable, const std::vector<Tensor>& snap) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (trainable.contains(store.at(i).group)) continue;
    if (!bitwise_equal(store.at(i).value, snap[i])) return false;
  }
  return true;
}

}  // namespace

double validation_forecast(const TrainState& state, Stage stage, const Dataset& data, const TrainConfig& config) {
  // Validation uses the event-aligned instances in every stage.
  return mean_forecast(state.model, stage, state.model.encode_all(data), config);
}

void run_stage(TrainState& state, Stage stage, const Dataset& train, const Dataset& val, const TrainConfig& config,
               TrainLog& log) {
  config.validate();
  if (train.empty()) throw DataError(std::string(stage_name(stage)) + ": empty training data");
  if (stage < state.stage) {
    throw ConfigError("cannot run stage " + std::string(stage_name(stage)) + " after " +
                      std::string(stage_name(state.stage)));
  }
  if (stage > state.stage) {
    log.transitions.push_back({state.stage, stage, state.epochs_done, state.epochs_done >= config.epochs(state.stage)});
    state.stage = stage;
    state.epochs_done = 0;
  }
  const std::size_t total_epochs = config.epochs(stage);
  if (state.epochs_done >= total_epochs) return;

  const GroupSet trainable = stage_groups(stage);
  const auto data = encode_for_stage(state.model, stage, train, config.stage1_stride);
  if (stage == Stage::Multimodal && data.items.size() < 2) {
    throw ConfigError("multimodal: need at least 2 training instances");
  }
  const auto val_items = state.model.encode_all(val);
  if (state.epochs_done == 0) {
    log.epochs.push_back({stage, 0, mean_forecast(state.model, stage, val_items, config), true});
  }

  while (state.epochs_done < total_epochs) {
    const std::size_t epoch = state.epochs_done + 1;
    const auto snap = frozen_snapshot(state.model.params(), trainable);
    for (const auto& idx : make_batches(data.items.size(), config.batch_size, state.rng)) {
      std::vector<const EncodedInstance*> batch;
      batch.reserve(idx.size());
      for (auto i : idx) batch.push_back(&data.items[i]);
      Tape tape;
      nn::Binder b(tape, state.model.params(), trainable);
      const Objective obj = stage_objective(stage, b, state.model, batch, config);
      ++state.step;
      check_finite(obj.losses, std::string(stage_name(stage)) + " step " + std::to_string(state.step));
      tape.backward(obj.total);
      auto grads = b.gradients();
      if (config.grad_clip > 0.0) clip_grad_norm(state.model.params(), grads, trainable, config.grad_clip);
      adam_step(state.model.params(), state.adam, grads, trainable, config.adam);
      log.steps.push_back({stage, epoch, state.step, obj.losses});
    }
    const bool audit = audit_frozen(state.model.params(), trainable, snap);
    if (!audit) throw Error(std::string(stage_name(stage)) + ": frozen parameters changed during epoch " +
                            std::to_string(epoch));
    state.epochs_done = epoch;
    log.epochs.push_back({stage, epoch, mean_forecast(state.model, stage, val_items, config), audit});
  }
}

void stage1_ts_pretrain(TrainState& state, const Dataset& train, const Dataset& val, const TrainConfig& config,
                        TrainLog& log) {
  run_stage(state, Stage::TsOnly, train, val, config, log);
}

void stage2_text_warmup(TrainState& state, const Dataset& train, const Dataset& val, const TrainConfig& config,
                        TrainLog& log) {
  run_stage(state, Stage::TextOnly, train, val, config, log);
}

void stage3_multimodal(TrainState& state, const Dataset& train, const Dataset& val, const TrainConfig& config,
                       TrainLog& log) {
  run_stage(state, Stage::Multimodal, train, val, config, log);
}

void train_all(TrainState& state, const Dataset& train, const Dataset& val, const TrainConfig& config, TrainLog& log) {
  for (Stage s : {Stage::TsOnly, Stage::TextOnly, Stage::Multimodal}) {
    if (s >= state.stage) run_stage(state, s, train, val, config, log);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint container (little-endian):
//   "GSFUSECK" | u32 version | u64 n | n bytes JSON header
//   per parameter: u32 len | name | u8 group | u32 rank | u64 dims[rank]
//                  | f64 value[] | f64 m[] | f64 v[] | u64 steps
//   u64 FNV-1a of every preceding byte

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'S', 'F', 'U', 'S', 'E', 'C', 'K'};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void bytes(std::string_view s) { buf_.append(s); }
  void doubles(std::span<const double> d) { buf_.append(reinterpret_cast<const char*>(d.data()), d.size_bytes()); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view buf) : buf_(buf) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }
  std::string_view take(std::size_t n) {
    if (n > buf_.size() - pos_) throw DataError("checkpoint: truncated file");
    auto out = buf_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  void doubles(std::span<double> d) { std::memcpy(d.data(), take(d.size_bytes()).data(), d.size_bytes()); }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string_view buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void checkpoint_save(const TrainState& state, std::ostream& out) {
  static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");
  nlohmann::ordered_json header;
  header["model"] = to_json(state.model.config());
  header["stage"] = stage_name(state.stage);
  header["epochs_done"] = state.epochs_done;
  header["step"] = state.step;
  header["seed"] = state.seed;
  header["rng"] = state.rng.state();
  header["param_count"] = state.model.params().size();
  const std::string hdr = header.dump();

  Writer w;
  w.bytes(std::string_view(kMagic.data(), kMagic.size()));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(hdr.size());
  w.bytes(hdr);
  const auto& store = state.model.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store.at(i);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.group));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.shape().size()));
    for (auto d : p.value.shape()) w.put<std::uint64_t>(d);
    w.doubles(p.value.data());
    w.doubles(state.adam.m[i].data());
    w.doubles(state.adam.v[i].data());
    w.put<std::uint64_t>(state.adam.steps[i]);
  }
  w.put<std::uint64_t>(fnv1a(w.buffer()));
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw DataError("checkpoint: write failed");
}

void checkpoint_save(const TrainState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open " + path.string() + " for writing");
  checkpoint_save(state, out);
}

TrainState checkpoint_load(std::istream& in) {
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < kMagic.size() + 4 + 8 + 8 || std::memcmp(buf.data(), kMagic.data(), kMagic.size()) != 0) {
    throw DataError("checkpoint: not a checkpoint file (bad magic)");
  }
  const std::string_view body(buf.data(), buf.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + body.size(), 8);
  Reader r(body);
  r.take(kMagic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  if (fnv1a(body) != stored) throw DataError("checkpoint: checksum mismatch (corrupt file)");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.take(r.get<std::uint64_t>()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  try {
    const auto seed = header.at("seed").get<std::uint64_t>();
    TrainState state = TrainState::fresh(model_config_from_json(header.at("model")), seed);
    state.stage = stage_from_name(header.at("stage").get<std::string>());
    state.epochs_done = header.at("epochs_done").get<std::size_t>();
    state.step = header.at("step").get<std::uint64_t>();
    state.rng.set_state(header.at("rng").get<std::string>());
    auto& store = state.model.params();
    if (header.at("param_count").get<std::size_t>() != store.size()) {
      throw DataError("checkpoint: parameter count does not match the model config");
    }
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto& p = store.at(i);
      const std::string name(r.take(r.get<std::uint32_t>()));
      const auto group = r.get<std::uint8_t>();
      Shape shape(r.get<std::uint32_t>());
      for (auto& d : shape) d = r.get<std::uint64_t>();
      if (name != p.name || group != static_cast<std::uint8_t>(p.group) || shape != p.value.shape()) {
        throw DataError("checkpoint: parameter '" + name + "' does not match model parameter '" + p.name + "'");
      }
      r.doubles(p.value.data());
      r.doubles(state.adam.m[i].data());
      r.doubles(state.adam.v[i].data());
      state.adam.steps[i] = r.get<std::uint64_t>();
    }
    if (!r.done()) throw DataError("checkpoint: trailing bytes after the last parameter");
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
}

TrainState checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  return checkpoint_load(in);
}

}  // namespace gsfuse::train
