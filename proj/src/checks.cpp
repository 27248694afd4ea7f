#include "gsfuse/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gsfuse/datagen.hpp"
#include "gsfuse/errors.hpp"
#include "gsfuse/rng.hpp"

namespace gsfuse::checks {

std::string_view term_name(LossTerm term) {
  switch (term) {
    case LossTerm::Forecast: return "forecast";
    case LossTerm::Ctr: return "ctr";
    case LossTerm::Tok: return "tok";
    case LossTerm::Gate: return "gate";
    case LossTerm::Total: return "total";
  }
  return "?";
}

LossTerm term_from_name(std::string_view name) {
  for (auto t : kLossTerms) {
    if (term_name(t) == name) return t;
  }
  throw ConfigError("unknown loss '" + std::string(name) + "'; valid: forecast, ctr, tok, gate, total");
}

ModelConfig micro_model() {
  ModelConfig c;
  c.fusion_dim = 16;
  c.vocab_size = 16;
  c.d_raw_text = 8;
  c.d_raw_ts = 8;
  c.horizon = 3;
  c.align_heads = 2;
  c.dec_layers = 1;
  c.dec_heads = 2;
  c.d_dec = 16;
  c.cross_attention_zero_init = false;
  return c;
}

GradCheckOptions default_options() {
  GradCheckOptions o;
  o.step = 1e-4;
  o.max_coords_per_param = 8;
  return o;
}

namespace {

Var pick(const train::Objective& obj, LossTerm term) {
  switch (term) {
    case LossTerm::Forecast: return obj.terms.forecast;
    case LossTerm::Ctr: return obj.terms.ctr;
    case LossTerm::Tok: return obj.terms.tok;
    case LossTerm::Gate: return obj.terms.gate;
    case LossTerm::Total: return obj.total;
  }
  return {};
}

}  // namespace

LossCheck check_loss(LossTerm term, train::Stage stage, std::uint64_t seed, std::size_t batch,
                     const GradCheckOptions& options) {
  if (term != LossTerm::Forecast) stage = train::Stage::Multimodal;
  if (batch < 2) throw ConfigError("check_loss: batch must hold at least 2 instances");

  datagen::ScenarioConfig sc;
  sc.num_events = batch;
  sc.lookback = 3;
  sc.horizon = 3;
  sc.vocab_size = 16;
  sc.script_len_min = 4;
  sc.script_len_max = 6;
  sc.signal_tokens = 2;
  sc.kappa = 0.5;
  sc.sigma_noise = 0.1;
  sc.seed = mix_seed(seed, 0x6d6963);
  const Dataset data = datagen::generate(sc);

  ModelConfig mc = micro_model();
  GsFuseModel model(mc, seed);
  // Random offsets so zero-initialized weights do not hide any path.
  Rng rng(mix_seed(seed, 0x6a6974));
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    for (double& v : model.params().at(i).value.data()) v += 0.1 * rng.normal();
  }

  const auto items = model.encode_all(data);
  std::vector<const EncodedInstance*> ptrs;
  for (const auto& e : items) ptrs.push_back(&e);
  train::TrainConfig tc;
  tc.lambda_align = 0.7;
  tc.lambda_gate = 1.3;

  std::vector<Tensor> stops;
  std::vector<Tensor> analytic;
  double floor = options.abs_floor;
  {
    Tape tape;
    nn::Binder b(tape, model.params(), nn::GroupSet::all());
    const auto obj = train::stage_objective(stage, b, model, ptrs, tc);
    Var loss = pick(obj, term);
    if (!std::isfinite(loss.item())) throw NumericalError("check_loss: non-finite loss at the base point");
    tape.backward(loss);
    analytic = b.gradients();
    stops = tape.stops();
    // Central differences cannot resolve gradients below the rounding noise of
    // the loss itself, ~|f| eps / h; compare absolutely under that level.
    floor = std::max(floor, 1e3 * std::abs(loss.item()) * std::numeric_limits<double>::epsilon() / options.step);
  }
  auto evaluate = [&] {
    Tape tape;
    tape.replay_stops(stops);
    nn::Binder b(tape, model.params(), nn::GroupSet::none());
    return pick(train::stage_objective(stage, b, model, ptrs, tc), term).item();
  };

  LossCheck out{term, stage, seed, {}};
  Rng sample(options.sample_seed ^ seed);
  auto& store = model.params();
  for (std::size_t p = 0; p < store.size(); ++p) {
    auto& value = store.at(p).value;
    GradCheckParam entry;
    entry.name = store.at(p).name;
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_param && coords.size() > options.max_coords_per_param) {
      sample.shuffle(coords);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      const double base = value[i];
      auto at = [&](double offset) {
        value[i] = base + offset;
        const double f = evaluate();
        value[i] = base;
        if (!std::isfinite(f)) {
          throw NumericalError("check_loss: non-finite loss when perturbing " + entry.name + "[" +
                               std::to_string(i) + "]");
        }
        return f;
      };
      const double h = options.step;
      // Fourth-order central stencil: truncation O(h^4) lets h sit well above
      // the rounding noise of the loss.
      const double numeric = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      const double err = relative_error(analytic[p][i], numeric, floor);
      ++entry.coords_checked;
      if (err > entry.max_rel_error || entry.coords_checked == 1) {
        entry.max_rel_error = std::max(entry.max_rel_error, err);
        entry.worst_index = i;
        entry.worst_analytic = analytic[p][i];
        entry.worst_numeric = numeric;
      }
    }
    out.report.max_rel_error = std::max(out.report.max_rel_error, entry.max_rel_error);
    out.report.params.push_back(std::move(entry));
  }
  out.report.passed = out.report.max_rel_error <= options.tolerance;
  return out;
}

std::vector<LossCheck> check_all(std::size_t seeds, std::uint64_t first_seed, const GradCheckOptions& options) {
  std::vector<LossCheck> out;
  for (std::uint64_t s = first_seed; s < first_seed + seeds; ++s) {
    for (auto stage : {train::Stage::TsOnly, train::Stage::TextOnly}) {
      out.push_back(check_loss(LossTerm::Forecast, stage, s, 2, options));
    }
    for (auto t : kLossTerms) out.push_back(check_loss(t, train::Stage::Multimodal, s, 2, options));
  }
  return out;
}

}  // namespace gsfuse::checks
