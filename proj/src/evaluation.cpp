#include "laneintent/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "laneintent/dataset_io.hpp"

namespace laneintent {

MeanStd mean_std(std::span<const double> v) {
  MeanStd r;
  r.n = v.size();
  if (v.empty()) return r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(v.size()));
  return r;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// ---------------------------------------------------------------------------

double lateral_half_extent(double theta, const LaneGeometry& geometry) {
  if (std::abs(theta) < 0.1) return geometry.vehicle_width / 2.0;
  return geometry.vehicle_length / 2.0 * std::abs(std::sin(theta)) +
         geometry.vehicle_width / 2.0 * std::abs(std::cos(theta));
}

namespace {

std::size_t record_at_or_after(const Trace& trace, double time) {
  const std::int64_t tick = tick_of(time);
  std::size_t lo = 0, hi = trace.records.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (tick_of(trace.records[mid].time) < tick) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace

BaselineResult lane_exit_baseline(const Trace& trace, const LaneGeometry& geometry) {
  BaselineResult out;
  const auto& events = trace.mode_events;
  for (std::size_t e = 0; e < events.size(); ++e) {
    if (events[e].to != ModeLabel::LaneChange) continue;
    const std::size_t begin = record_at_or_after(trace, events[e].time);
    std::size_t end = trace.records.size();
    for (std::size_t f = e + 1; f < events.size(); ++f) {
      if (events[f].from == ModeLabel::LaneChange) {
        end = record_at_or_after(trace, events[f].time);
        break;
      }
    }
    if (begin >= trace.records.size()) {
      ++out.excluded;
      continue;
    }
    const LaneId source = lane_of(trace.records[begin].ego.py, geometry);
    const double toward = source == LaneId::Right ? 1.0 : -1.0;
    bool found = false;
    for (std::size_t k = begin; k < end; ++k) {
      const auto& ego = trace.records[k].ego;
      if (std::abs(ego.py - geometry.divider_y) < lateral_half_extent(ego.theta, geometry) &&
          ego.vy * toward > 0.0) {
        out.events.push_back({events[e].time, trace.records[k].time});
        found = true;
        break;
      }
    }
    if (!found) ++out.excluded;
  }
  return out;
}

TimingResult timing_metrics(const Trace& trace, const BaselineResult& baselines) {
  const auto& events = trace.mode_events;
  const auto lc_entries = static_cast<std::size_t>(std::count_if(
      events.begin(), events.end(), [](const ModeEvent& e) { return e.to == ModeLabel::LaneChange; }));
  if (lc_entries != baselines.events.size() + baselines.excluded) {
    throw DomainError("timing_metrics: trace '" + trace.episode_id + "' has " +
                      std::to_string(lc_entries) + " lane changes but " +
                      std::to_string(baselines.events.size()) + " baselines + " +
                      std::to_string(baselines.excluded) + " excluded");
  }

  TimingResult out;
  double prepare_start = 0.0;
  bool in_prepare = false;
  std::size_t next_baseline = 0;
  for (const auto& ev : events) {
    if (ev.to == ModeLabel::Prepare) {
      prepare_start = ev.time;
      in_prepare = true;
      continue;
    }
    if (ev.from == ModeLabel::Prepare && ev.to == ModeLabel::LaneKeep && in_prepare) {
      out.aborted_t_p.push_back(ev.time - prepare_start);
      in_prepare = false;
      continue;
    }
    if (ev.to != ModeLabel::LaneChange) continue;
    const double prep = ev.from == ModeLabel::Prepare && in_prepare ? prepare_start : ev.time;
    in_prepare = false;
    if (next_baseline < baselines.events.size() &&
        tick_of(baselines.events[next_baseline].lc_time) == tick_of(ev.time)) {
      const double base = baselines.events[next_baseline++].baseline_time;
      out.events.push_back({prep, ev.time, base, ev.time - prep, base - prep, base - ev.time});
    }
  }
  if (next_baseline != baselines.events.size()) {
    throw DomainError("timing_metrics: baseline at t=" +
                      format_double(baselines.events[next_baseline].lc_time) +
                      " matches no lane change in trace '" + trace.episode_id + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------

AccuracyReport accuracy_report(std::span<const ModeLabel> predictions, const LabeledDataset& data) {
  if (predictions.size() != data.rows()) {
    throw DomainError("accuracy_report: " + std::to_string(predictions.size()) +
                      " predictions for " + std::to_string(data.rows()) + " rows");
  }
  AccuracyReport r;
  r.samples = data.rows();
  std::array<std::size_t, 4> hits{};
  std::size_t total_hits = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto t = mode_index(data.labels[i]);
    const auto p = mode_index(predictions[i]);
    ++r.counts[t][p];
    const std::size_t scen = std::min<std::size_t>(data.vehicles_in_range[i], 3);
    ++r.scenario_samples[scen];
    if (t == p) {
      ++hits[scen];
      ++total_hits;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.overall = r.samples ? static_cast<double>(total_hits) / static_cast<double>(r.samples) : nan;
  for (std::size_t s = 0; s < 4; ++s) {
    r.by_scenario[s] = r.scenario_samples[s]
                           ? static_cast<double>(hits[s]) / static_cast<double>(r.scenario_samples[s])
                           : nan;
  }
  for (std::size_t i = 0; i < kModeCount; ++i) {
    const std::size_t support = r.counts[i][0] + r.counts[i][1] + r.counts[i][2];
    r.row_has_support[i] = support > 0;
    for (std::size_t j = 0; j < kModeCount; ++j) {
      r.confusion[i][j] =
          support ? static_cast<double>(r.counts[i][j]) / static_cast<double>(support) : 0.0;
    }
    r.recall[i] = r.confusion[i][i];
  }
  return r;
}

// ---------------------------------------------------------------------------

double kolmogorov_q(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.0) {
    // Same function through the Jacobi theta identity; the alternating
    // series cancels badly down here.
    const double pi = std::acos(-1.0);
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double odd = 2.0 * k - 1.0;
      const double term = std::exp(-odd * odd * pi * pi / (8.0 * lambda * lambda));
      sum += term;
      if (term < 1e-17 * sum || term == 0.0) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * sum,
                      std::numeric_limits<double>::min(), 1.0);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) <= 1e-12 * std::abs(sum) || std::abs(term) < 1e-300) {
      return std::clamp(sum, std::numeric_limits<double>::min(), 1.0);
    }
    sign = -sign;
  }
  // Series did not settle: lambda is tiny and Q is indistinguishable from 1.
  return 1.0;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.size() < 8 || b.size() < 8) {
    throw DomainError("ks_two_sample: each sample needs at least 8 values (got " +
                      std::to_string(a.size()) + " and " + std::to_string(b.size()) + ")");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double root = std::sqrt(ne);
  return {d, kolmogorov_q((root + 0.12 + 0.11 / root) * d)};
}

// ---------------------------------------------------------------------------

Histogram make_histogram(std::span<const double> samples, double bin_width) {
  if (!(bin_width > 0.0)) throw DomainError("histogram bin width must be > 0");
  Histogram h;
  h.bin_width = bin_width;
  if (samples.empty()) return h;
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  const auto first = static_cast<long long>(std::floor(*lo / bin_width));
  const auto last = static_cast<long long>(std::floor(*hi / bin_width));
  h.origin = static_cast<double>(first) * bin_width;
  h.counts.assign(static_cast<std::size_t>(last - first + 1), 0);
  for (double v : samples) {
    const auto bin = static_cast<long long>(std::floor(v / bin_width)) - first;
    ++h.counts[static_cast<std::size_t>(std::clamp<long long>(bin, 0, last - first))];
  }
  return h;
}

void ModeDistributions::merge(const ModeDistributions& other) {
  for (std::size_t m = 0; m < kModeCount; ++m) {
    lateral[m].insert(lateral[m].end(), other.lateral[m].begin(), other.lateral[m].end());
  }
  at_prepare.insert(at_prepare.end(), other.at_prepare.begin(), other.at_prepare.end());
  at_lane_change.insert(at_lane_change.end(), other.at_lane_change.begin(),
                        other.at_lane_change.end());
}

void collect_distributions(const Trace& trace, const LaneGeometry& geometry,
                           const SensorConfig& sensor, ModeDistributions& into) {
  for (const auto& rec : trace.records) {
    const LaneId lane = lane_of(rec.ego.py, geometry);
    const double dev = rec.ego.py - geometry.center_of(lane);
    into.lateral[mode_index(rec.mode)].push_back(lane == LaneId::Left ? -dev : dev);
  }
  for (const auto& ev : trace.mode_events) {
    const auto sigma = sigma_for(ev.from, ev.to);
    if (sigma != Sigma::Prepare && sigma != Sigma::Execute) continue;
    const std::size_t k = record_at_or_after(trace, ev.time);
    if (k >= trace.records.size()) continue;
    const auto& rec = trace.records[k];
    const SlotGrid slots =
        assign_slots(rec.ego, lane_of(rec.ego.py, geometry), rec.others_measured, geometry);
    if (!slots.ahead_same) continue;
    const TimeMetrics t = compute_time_metrics(
        slots.ahead_same->rel_x, std::hypot(rec.ego.vx, rec.ego.vy), slots.ahead_same->rel_vx,
        sensor);
    (sigma == Sigma::Prepare ? into.at_prepare : into.at_lane_change).push_back({t.ttc, t.thw});
  }
}

ModeDistributions mode_distributions(std::span<const Trace> traces, const LaneGeometry& geometry,
                                     const SensorConfig& sensor) {
  ModeDistributions d;
  for (const auto& t : traces) collect_distributions(t, geometry, sensor, d);
  return d;
}

// ---------------------------------------------------------------------------

std::vector<ProbabilityRow> probability_trace(const Model& model, const Trace& trace,
                                              const Normalizer& normalizer,
                                              const SensorConfig& sensor,
                                              const LaneGeometry& geometry) {
  if (model.kind == ModelKind::SVM) {
    throw DomainError("probability_trace: svm models do not provide class probabilities");
  }
  LabeledDataset rows = trace_rows(trace, sensor, geometry);
  normalize_in_place(rows, normalizer);
  std::vector<ProbabilityRow> out;
  out.reserve(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    out.push_back({trace.records[i].time, predict_proba(model, rows.row(i)), rows.labels[i]});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string model_label(const ModelEvaluation& m) {
  return (m.driver_id.empty() ? std::string("all") : m.driver_id) + " " +
         std::string(model_kind_name(m.kind));
}

struct TimingSummary {
  MeanStd t_p, dt_p, dt_lc, aborted;
  MeanStd t_p_subject, dt_p_subject, dt_lc_subject;  // over per-driver means
  double median_dt_p = 0.0, median_dt_lc = 0.0;
  std::size_t excluded = 0;
};

TimingSummary summarize_timing(const std::vector<DriverTiming>& drivers) {
  std::vector<double> tp, dtp, dtlc, ab, tp_m, dtp_m, dtlc_m;
  TimingSummary s;
  for (const auto& d : drivers) {
    std::vector<double> a, b, c;
    for (const auto& e : d.timing.events) {
      a.push_back(e.t_p);
      b.push_back(e.dt_p);
      c.push_back(e.dt_lc);
    }
    tp.insert(tp.end(), a.begin(), a.end());
    dtp.insert(dtp.end(), b.begin(), b.end());
    dtlc.insert(dtlc.end(), c.begin(), c.end());
    ab.insert(ab.end(), d.timing.aborted_t_p.begin(), d.timing.aborted_t_p.end());
    if (!a.empty()) {
      tp_m.push_back(mean_std(a).mean);
      dtp_m.push_back(mean_std(b).mean);
      dtlc_m.push_back(mean_std(c).mean);
    }
    s.excluded += d.excluded_lane_changes;
  }
  s.t_p = mean_std(tp);
  s.dt_p = mean_std(dtp);
  s.dt_lc = mean_std(dtlc);
  s.aborted = mean_std(ab);
  s.t_p_subject = mean_std(tp_m);
  s.dt_p_subject = mean_std(dtp_m);
  s.dt_lc_subject = mean_std(dtlc_m);
  s.median_dt_p = median(dtp);
  s.median_dt_lc = median(dtlc);
  return s;
}

std::vector<double> pick(const std::vector<TransitionSample>& v, bool ttc) {
  std::vector<double> out;
  for (const auto& s : v) out.push_back(ttc ? s.ttc : s.thw);
  return out;
}

}  // namespace

std::string format_report(const EvalReport& report) {
  std::string out;
  auto line = [&](const std::string& s) {
    out += s;
    out += '\n';
  };
  line("Episodes: " + std::to_string(report.episodes) + " (excluded " +
       std::to_string(report.excluded_episodes) + ")");
  line("");
  line("Accuracy (%)");
  line("model              Overall  Scen.1  Scen.2  Scen.3  samples");
  for (const auto& m : report.models) {
    char buf[160];
    const auto& a = m.accuracy;
    std::snprintf(buf, sizeof buf, "%-18s %7.2f %7.2f %7.2f %7.2f  %zu", model_label(m).c_str(),
                  100 * a.overall, 100 * a.by_scenario[1], 100 * a.by_scenario[2],
                  100 * a.by_scenario[3], a.samples);
    line(buf);
  }
  for (const auto& m : report.models) {
    line("");
    line("Confusion " + model_label(m) + " (row = true mode)");
    line("        LK      P       LC");
    for (std::size_t i = 0; i < kModeCount; ++i) {
      std::string row = std::string(mode_tag(mode_from_index(i)));
      row.resize(4, ' ');
      for (std::size_t j = 0; j < kModeCount; ++j) row += "  " + fixed(m.accuracy.confusion[i][j]);
      if (!m.accuracy.row_has_support[i]) row += "  (no samples)";
      line(row);
    }
  }

  if (!report.timing.empty()) {
    const TimingSummary s = summarize_timing(report.timing);
    line("");
    line("Timing (s)        mean     std      subj.mean subj.std  n");
    auto timing_line = [&](const char* name, const MeanStd& e, const MeanStd& subj) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-16s %8.3f %8.3f %9.3f %8.3f  %zu", name, e.mean, e.std,
                    subj.mean, subj.std, e.n);
      line(buf);
    };
    timing_line("T_P", s.t_p, s.t_p_subject);
    timing_line("dT_P", s.dt_p, s.dt_p_subject);
    timing_line("dT_LC", s.dt_lc, s.dt_lc_subject);
    line("median dT_P " + fixed(s.median_dt_p, 3) + ", median dT_LC " + fixed(s.median_dt_lc, 3));
    line("aborted preparations: " + std::to_string(s.aborted.n) + ", mean duration " +
         fixed(s.aborted.mean, 3) + " s");
    line("lane changes without a lane exit: " + std::to_string(s.excluded));
  }

  const auto& d = report.distributions;
  line("");
  line("Transition metrics   mean     std      n");
  auto metric_line = [&](const char* name, const std::vector<double>& v) {
    const MeanStd ms = mean_std(v);
    char buf[120];
    std::snprintf(buf, sizeof buf, "%-18s %7.3f %7.3f  %zu", name, ms.mean, ms.std, ms.n);
    line(buf);
  };
  metric_line("TTC_P (s)", pick(d.at_prepare, true));
  metric_line("TTC_LC (s)", pick(d.at_lane_change, true));
  metric_line("THW_P (1/s)", pick(d.at_prepare, false));
  metric_line("THW_LC (1/s)", pick(d.at_lane_change, false));
  line("");
  line("Lateral deviation (m)   mean     std      n");
  for (std::size_t m = 0; m < kModeCount; ++m) {
    const MeanStd ms = mean_std(d.lateral[m]);
    char buf[120];
    std::snprintf(buf, sizeof buf, "%-22s %7.3f %7.3f  %zu",
                  std::string(mode_name(mode_from_index(m))).c_str(), ms.mean, ms.std, ms.n);
    line(buf);
  }
  char ks[120];
  std::snprintf(ks, sizeof ks, "KS LaneKeep vs Prepare: D = %.4f, p = %.3g", report.lateral_ks.d,
                report.lateral_ks.p);
  line(ks);
  return out;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "report.txt", format_report(report));

  std::string acc = "driver,algorithm,overall,scen1,scen2,scen3,scen0,samples\n";
  std::string conf = "driver,algorithm,true_mode,LK,P,LC,support\n";
  for (const auto& m : report.models) {
    const auto& a = m.accuracy;
    const std::string who = (m.driver_id.empty() ? "all" : m.driver_id) + "," +
                            std::string(model_kind_name(m.kind));
    acc += who + "," + fixed(a.overall, 6) + "," + fixed(a.by_scenario[1], 6) + "," +
           fixed(a.by_scenario[2], 6) + "," + fixed(a.by_scenario[3], 6) + "," +
           fixed(a.by_scenario[0], 6) + "," + std::to_string(a.samples) + "\n";
    for (std::size_t i = 0; i < kModeCount; ++i) {
      conf += who + "," + std::string(mode_tag(mode_from_index(i)));
      for (std::size_t j = 0; j < kModeCount; ++j) conf += "," + fixed(a.confusion[i][j], 6);
      conf += "," + std::to_string(a.counts[i][0] + a.counts[i][1] + a.counts[i][2]) + "\n";
    }
  }
  write_text_file(dir / "accuracy_table.csv", acc);
  write_text_file(dir / "confusion.csv", conf);

  std::string timing = "driver,prepare_time,lc_time,baseline_time,t_p,dt_p,dt_lc\n";
  for (const auto& d : report.timing) {
    for (const auto& e : d.timing.events) {
      timing += d.driver_id + "," + format_double(e.prepare_time) + "," +
                format_double(e.lc_time) + "," + format_double(e.baseline_time) + "," +
                format_double(e.t_p) + "," + format_double(e.dt_p) + "," +
                format_double(e.dt_lc) + "\n";
    }
  }
  write_text_file(dir / "timing.csv", timing);

  std::string hist = "mode,bin_left,bin_right,count\n";
  for (std::size_t m = 0; m < kModeCount; ++m) {
    const Histogram h = make_histogram(report.distributions.lateral[m]);
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      const double left = h.origin + static_cast<double>(b) * h.bin_width;
      hist += std::string(mode_tag(mode_from_index(m))) + "," + fixed(left, 4) + "," +
              fixed(left + h.bin_width, 4) + "," + std::to_string(h.counts[b]) + "\n";
    }
  }
  write_text_file(dir / "lateral_hist.csv", hist);

  std::string trans = "transition,ttc,thw\n";
  for (const auto& s : report.distributions.at_prepare) {
    trans += "sigma1," + format_double(s.ttc) + "," + format_double(s.thw) + "\n";
  }
  for (const auto& s : report.distributions.at_lane_change) {
    trans += "sigma2," + format_double(s.ttc) + "," + format_double(s.thw) + "\n";
  }
  write_text_file(dir / "transitions.csv", trans);

  if (!report.probability.empty()) {
    std::string prob = "time,p_LK,p_P,p_LC,true_mode\n";
    for (const auto& r : report.probability) {
      prob += format_double(r.time) + "," + format_double(r.p[0]) + "," + format_double(r.p[1]) +
              "," + format_double(r.p[2]) + "," + std::string(mode_tag(r.truth)) + "\n";
    }
    write_text_file(dir / "prob_trace.csv", prob);
  }
}

}  // namespace laneintent
