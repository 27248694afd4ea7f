#include "gsfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "json.hpp"

#include "gsfuse/errors.hpp"
#include "gsfuse/fusion.hpp"
#include "gsfuse/ops.hpp"

namespace gsfuse::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int sign(double v) { return (v > 0.0) - (v < 0.0); }

std::string fmt(const char* pattern, double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string raw(double v) { return fmt("%.17g", v); }

}  // namespace

MseMae metric_mse_mae(std::span<const Tensor> predictions, std::span<const Tensor> targets) {
  if (predictions.size() != targets.size()) throw DimensionError("metrics: prediction/target counts differ");
  if (predictions.empty()) throw DataError("metrics: no instances");
  MseMae out;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto p = predictions[i].data();
    const auto y = targets[i].data();
    if (predictions[i].shape() != targets[i].shape()) {
      throw DimensionError("metrics: prediction " + shape_string(predictions[i].shape()) + " vs target " +
                           shape_string(targets[i].shape()));
    }
    double se = 0.0, ae = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double d = p[k] - y[k];
      se += d * d;
      ae += std::abs(d);
    }
    out.mse += se / static_cast<double>(p.size());
    out.mae += ae / static_cast<double>(p.size());
  }
  out.mse /= static_cast<double>(predictions.size());
  out.mae /= static_cast<double>(predictions.size());
  return out;
}

double metric_dhr(const Tensor& prediction, const Tensor& target, double x_last) {
  if (prediction.shape() != target.shape()) {
    throw DimensionError("dhr: prediction " + shape_string(prediction.shape()) + " vs target " +
                         shape_string(target.shape()));
  }
  if (target.cols() != 1) throw DimensionError("dhr: defined for a single series (d_y = 1)");
  const std::size_t h = target.rows();
  if (h == 0) throw DataError("dhr: empty horizon");
  const auto p = prediction.data();
  const auto y = target.data();
  std::size_t hits = 0;
  double prev_p = x_last, prev_y = x_last;
  for (std::size_t k = 0; k < h; ++k) {
    if (sign(p[k] - prev_p) == sign(y[k] - prev_y)) ++hits;
    prev_p = p[k];
    prev_y = y[k];
  }
  return static_cast<double>(hits) / static_cast<double>(h);
}

double sign_strategy_return(const Tensor& prediction, const Tensor& target, double x_last) {
  if (prediction.size() == 0 || target.size() == 0) throw DataError("sharpe: empty horizon");
  if (x_last == 0.0) throw NumericalError("sharpe: last observed value is zero");
  const double position = sign(prediction.data().back() - x_last);
  return position * (target.data().back() - x_last) / std::abs(x_last);
}

double metric_sharpe(std::span<const double> returns) {
  if (returns.size() < 2) throw DataError("sharpe: needs at least 2 events");
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(returns.size());
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  var /= static_cast<double>(returns.size() - 1);
  if (var == 0.0) return kNaN;
  return mean / std::sqrt(var);
}

std::string format_scaled(double raw_value, double factor) { return fmt("%.2f", raw_value * factor); }

double MetricReport::mse_improvement_pct() const { return (ts_only.mse - full.mse) / ts_only.mse * 100.0; }
double MetricReport::mae_improvement_pct() const { return (ts_only.mae - full.mae) / ts_only.mae * 100.0; }

void MetricReport::write_csv(std::ostream& out, bool scaled) const {
  out << "dataset,horizon,branch,n,mse,mae,dhr,sharpe,mean_text_gate\n";
  auto row = [&](const char* branch, const BranchMetrics& m) {
    out << dataset << ',' << horizon << ',' << branch << ',' << instances << ',';
    if (scaled) {
      out << format_scaled(m.mse, kMseScale) << ',' << format_scaled(m.mae, kMaeScale) << ','
          << format_scaled(m.dhr, kDhrScale) << ',' << fmt("%.2f", m.sharpe) << ',' << fmt("%.2f", mean_text_gate * 100.0);
    } else {
      out << raw(m.mse) << ',' << raw(m.mae) << ',' << raw(m.dhr) << ',' << raw(m.sharpe) << ',' << raw(mean_text_gate);
    }
    out << '\n';
  };
  row("ts_only", ts_only);
  row("full", full);
  // Relative change in percent for the error metrics; DHR/Sharpe as full - ts_only.
  const char* p = scaled ? "%.2f" : "%.17g";
  out << dataset << ',' << horizon << ",improvement_pct," << instances << ',' << fmt(p, mse_improvement_pct()) << ','
      << fmt(p, mae_improvement_pct()) << ',' << fmt(p, (full.dhr - ts_only.dhr) * (scaled ? kDhrScale : 1.0)) << ','
      << fmt(p, full.sharpe - ts_only.sharpe) << ",\n";
}

namespace {

struct BranchForecasts {
  std::vector<Tensor> full, ts, targets;
  std::vector<double> x_last, openness;
};

BranchForecasts forecast_both(const GsFuseModel& model, const Dataset& test) {
  BranchForecasts f;
  for (const auto& enc : model.encode_all(test)) {
    Tape tape;
    nn::Binder b(tape, model.params(), nn::GroupSet::none());
    const auto tr = model.forward_instance(b, enc);
    f.full.push_back(model.to_levels(tr.utility.forecast_full.value(), enc));
    f.ts.push_back(model.to_levels(tr.utility.forecast_ts.value(), enc));
    f.targets.push_back(enc.target_levels);
    f.x_last.push_back(enc.last_observed.data()[0]);
    f.openness.push_back(tr.gate.openness.item());
  }
  return f;
}

BranchMetrics branch_metrics(const std::vector<Tensor>& preds, const BranchForecasts& f) {
  BranchMetrics m;
  const auto e = metric_mse_mae(preds, f.targets);
  m.mse = e.mse;
  m.mae = e.mae;
  if (f.targets.front().cols() != 1) {
    m.dhr = m.sharpe = kNaN;
    return m;
  }
  std::vector<double> returns;
  m.dhr = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    m.dhr += metric_dhr(preds[i], f.targets[i], f.x_last[i]);
    returns.push_back(sign_strategy_return(preds[i], f.targets[i], f.x_last[i]));
  }
  m.dhr /= static_cast<double>(preds.size());
  m.sharpe = returns.size() >= 2 ? metric_sharpe(returns) : kNaN;
  return m;
}

}  // namespace

MetricReport compare_branches(const GsFuseModel& model, const Dataset& test, const std::string& dataset) {
  if (test.empty()) throw DataError("compare_branches: empty test set");
  const auto f = forecast_both(model, test);
  MetricReport r;
  r.dataset = dataset;
  r.horizon = model.config().horizon;
  r.instances = test.size();
  r.ts_only = branch_metrics(f.ts, f);
  r.full = branch_metrics(f.full, f);
  for (double a : f.openness) r.mean_text_gate += a;
  r.mean_text_gate /= static_cast<double>(f.openness.size());
  return r;
}

MetricReport compare_branches(const train::TrainState& state, const Dataset& test, const std::string& dataset) {
  if (state.stage != train::Stage::Multimodal || state.epochs_done == 0) {
    throw ConfigError("compare_branches: model has not been trained through the multimodal stage (at stage " +
                      std::string(train::stage_name(state.stage)) + ", " + std::to_string(state.epochs_done) +
                      " epochs)");
  }
  return compare_branches(state.model, test, dataset);
}

std::size_t histogram_bin(double openness) {
  const double x = std::clamp(openness, 0.0, 1.0);
  return std::min(kHistogramBins - 1, static_cast<std::size_t>(x * static_cast<double>(kHistogramBins)));
}

GateReport build_gate_report(std::vector<GateRow> rows) {
  if (rows.empty()) throw DataError("gate report: empty dataset");
  GateReport rep;
  rep.rows = std::move(rows);
  std::array<double, kEventCategoryCount> sums{};
  std::array<std::size_t, kEventCategoryCount> counts{};
  double inf_sum = 0.0, uninf_sum = 0.0;
  std::size_t inf_n = 0, uninf_n = 0;
  for (const auto& row : rep.rows) {
    rep.mean_openness += row.openness;
    const auto c = static_cast<std::size_t>(row.category);
    sums[c] += row.openness;
    ++counts[c];
    ++rep.histogram[histogram_bin(row.openness)];
    if (row.informative) {
      if (*row.informative) {
        inf_sum += row.openness;
        ++inf_n;
      } else {
        uninf_sum += row.openness;
        ++uninf_n;
      }
    }
  }
  rep.mean_openness /= static_cast<double>(rep.rows.size());
  for (std::size_t c = 0; c < kEventCategoryCount; ++c) {
    if (counts[c] > 0) rep.category_mean[c] = sums[c] / static_cast<double>(counts[c]);
  }
  if (inf_n > 0) rep.informative_mean = inf_sum / static_cast<double>(inf_n);
  if (uninf_n > 0) rep.uninformative_mean = uninf_sum / static_cast<double>(uninf_n);
  return rep;
}

GateReport gate_report(const GsFuseModel& model, const Dataset& data) {
  if (data.empty()) throw DataError("gate report: empty dataset");
  std::vector<GateRow> rows;
  std::vector<double> deltas;
  for (const auto& enc : model.encode_all(data)) {
    Tape tape;
    nn::Binder b(tape, model.params(), nn::GroupSet::none());
    const auto tr = model.forward_instance(b, enc);
    GateRow row;
    row.id = enc.id;
    row.category = enc.category;
    row.openness = tr.gate.openness.item();
    row.delta = tr.utility.delta;
    row.informative = enc.text_informative;
    deltas.push_back(row.delta);
    rows.push_back(row);
  }
  const auto resp = fusion::responsibility(deltas, model.config().gate);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].r = resp.r[i];
  return build_gate_report(std::move(rows));
}

void GateReport::write_rows_csv(std::ostream& out) const {
  out << "id,category,openness,delta,r\n";
  for (const auto& row : rows) {
    out << row.id << ',' << category_name(row.category) << ',' << raw(row.openness) << ',' << raw(row.delta) << ','
        << raw(row.r) << '\n';
  }
}

void GateReport::write_summary_csv(std::ostream& out) const {
  out << "group,mean_openness\n";
  out << "all," << raw(mean_openness) << '\n';
  for (std::size_t c = 0; c < kEventCategoryCount; ++c) {
    if (category_mean[c]) out << category_name(static_cast<EventCategory>(c)) << ',' << raw(*category_mean[c]) << '\n';
  }
  if (informative_mean) out << "informative," << raw(*informative_mean) << '\n';
  if (uninformative_mean) out << "uninformative," << raw(*uninformative_mean) << '\n';
}

void GateReport::write_histogram_csv(std::ostream& out) const {
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < kHistogramBins; ++i) {
    out << fmt("%.2f", static_cast<double>(i) / kHistogramBins) << ','
        << fmt("%.2f", static_cast<double>(i + 1) / kHistogramBins) << ',' << histogram[i] << '\n';
  }
}

void GateReport::write_svg(std::ostream& out) const {
  constexpr int w = 420, h = 240, pad = 30;
  const std::size_t peak = std::max<std::size_t>(1, *std::max_element(histogram.begin(), histogram.end()));
  const double bar_w = static_cast<double>(w - 2 * pad) / kHistogramBins;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<text x=\"" << pad << "\" y=\"18\" font-size=\"12\">text gate openness (n=" << rows.size()
      << ", mean=" << fmt("%.3f", mean_openness) << ")</text>\n";
  for (std::size_t i = 0; i < kHistogramBins; ++i) {
    const double bh = static_cast<double>(h - 2 * pad) * static_cast<double>(histogram[i]) / static_cast<double>(peak);
    out << "<rect x=\"" << fmt("%.1f", pad + bar_w * static_cast<double>(i)) << "\" y=\""
        << fmt("%.1f", h - pad - bh) << "\" width=\"" << fmt("%.1f", bar_w - 1.0) << "\" height=\"" << fmt("%.1f", bh)
        << "\" fill=\"steelblue\"/>\n";
  }
  out << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << pad << "\" y=\"" << h - 10 << "\" font-size=\"10\">0</text>\n";
  out << "<text x=\"" << w - pad << "\" y=\"" << h - 10 << "\" font-size=\"10\">1</text>\n";
  out << "</svg>\n";
}

std::vector<AlignRow> align_report(const GsFuseModel& model, const Dataset& data) {
  std::vector<AlignRow> out;
  for (const auto& enc : model.encode_all(data)) {
    Tape tape;
    nn::Binder b(tape, model.params(), nn::GroupSet::none());
    const auto tr = model.forward_instance(b, enc);
    const Tensor cos = ops::matmul_nt(tr.z_text, tr.z_ts).value();
    const auto sal = tr.salience.scores.value().data();
    for (std::size_t j : tr.salience.anchors) {
      const auto row = cos.row(j);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      out.push_back({enc.id, j, enc.tokens[j], sal[j], best, row[best]});
    }
  }
  return out;
}

void write_align_jsonl(std::span<const AlignRow> rows, std::ostream& out) {
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["instance_id"] = r.instance_id;
    j["position"] = r.position;
    j["token_id"] = r.token_id;
    j["salience"] = r.salience;
    j["argmax_step"] = r.argmax_step;
    j["similarity"] = r.similarity;
    out << j.dump() << '\n';
  }
}

}  // namespace gsfuse::eval
