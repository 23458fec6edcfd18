#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "laneintent/classifiers.hpp"
#include "laneintent/perception.hpp"
#include "laneintent/simulation.hpp"

namespace laneintent {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t n = 0;
};

MeanStd mean_std(std::span<const double> v);
double median(std::vector<double> v);

// ---------------------------------------------------------------------------
// Lane-exit baseline and timing

/// One lane change (entry into LaneChange) and its lane-exit time.
struct BaselineEvent {
  double lc_time = 0.0;        // entry into LaneChange
  double baseline_time = 0.0;  // first tick the box crosses the divider
};

struct BaselineResult {
  std::vector<BaselineEvent> events;
  /// Lane changes whose span ended without a crossing.
  std::size_t excluded = 0;
};

/// Half of the ego's lateral footprint at heading theta: axis-aligned for
/// |theta| < 0.1 rad, rotated rectangle otherwise.
double lateral_half_extent(double theta, const LaneGeometry& geometry);

/// For each LaneChange span, the first record whose box reaches the divider
/// (|py - divider| < half extent) while moving toward the target lane.
BaselineResult lane_exit_baseline(const Trace& trace, const LaneGeometry& geometry);

struct EventTiming {
  double prepare_time = 0.0;   // sigma1
  double lc_time = 0.0;        // sigma2
  double baseline_time = 0.0;
  double t_p = 0.0;            // lc - prepare
  double dt_p = 0.0;           // baseline - prepare
  double dt_lc = 0.0;          // baseline - lc
};

struct TimingResult {
  std::vector<EventTiming> events;
  /// Durations of Prepare spans that ended in an abort.
  std::vector<double> aborted_t_p;
};

/// Pairs each baseline with its LaneChange entry in `trace`. A lane change
/// entered straight from LaneKeep gets a zero-length Prepare interval.
/// Throws DomainError if a baseline has no matching lane change.
TimingResult timing_metrics(const Trace& trace, const BaselineResult& baselines);

// ---------------------------------------------------------------------------
// Accuracy

struct AccuracyReport {
  std::size_t samples = 0;
  double overall = 0.0;
  /// Index = vehicles within the detection radius (0..3). NaN when empty.
  std::array<double, 4> by_scenario{};
  std::array<std::size_t, 4> scenario_samples{};
  /// Row-normalized; row i = true mode i. Rows with no support are zero.
  std::array<std::array<double, kModeCount>, kModeCount> confusion{};
  std::array<std::array<std::size_t, kModeCount>, kModeCount> counts{};
  std::array<bool, kModeCount> row_has_support{};
  std::array<double, kModeCount> recall{};
};

AccuracyReport accuracy_report(std::span<const ModeLabel> predictions, const LabeledDataset& data);

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

struct KsResult {
  double d = 0.0;
  double p = 1.0;
};

/// Asymptotic Kolmogorov survival function Q(lambda), 100-term series,
/// clamped to (0, 1].
double kolmogorov_q(double lambda);

/// Two-sample KS. Both samples need at least 8 values.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// ---------------------------------------------------------------------------
// Distributions

struct Histogram {
  double bin_width = 0.05;
  double origin = 0.0;  // left edge of bin 0
  std::vector<std::size_t> counts;
};

Histogram make_histogram(std::span<const double> samples, double bin_width = 0.05);

struct TransitionSample {
  double ttc = 0.0;
  double thw = 0.0;
};

struct ModeDistributions {
  /// Lateral deviation from the current lane centre, left lane mirrored.
  std::array<std::vector<double>, kModeCount> lateral;
  /// Slot-1 time metrics at entries into Prepare and LaneChange (only
  /// when slot 1 is occupied on that tick).
  std::vector<TransitionSample> at_prepare;
  std::vector<TransitionSample> at_lane_change;

  void merge(const ModeDistributions& other);
};

/// Accumulates one trace into `into`.
void collect_distributions(const Trace& trace, const LaneGeometry& geometry,
                           const SensorConfig& sensor, ModeDistributions& into);

ModeDistributions mode_distributions(std::span<const Trace> traces, const LaneGeometry& geometry,
                                     const SensorConfig& sensor);

// ---------------------------------------------------------------------------
// Probability traces

struct ProbabilityRow {
  double time = 0.0;
  std::array<double, kModeCount> p{};
  ModeLabel truth = ModeLabel::LaneKeep;
};

/// Per record: class probabilities of the normalized features. Throws
/// DomainError for SVM models.
std::vector<ProbabilityRow> probability_trace(const Model& model, const Trace& trace,
                                              const Normalizer& normalizer,
                                              const SensorConfig& sensor,
                                              const LaneGeometry& geometry);

// ---------------------------------------------------------------------------
// Reports

struct ModelEvaluation {
  std::string driver_id;  // empty for a pooled model
  ModelKind kind = ModelKind::SVM;
  AccuracyReport accuracy;
};

struct DriverTiming {
  std::string driver_id;
  TimingResult timing;
  std::size_t excluded_lane_changes = 0;
  std::size_t aborts = 0;
};

struct EvalReport {
  std::vector<ModelEvaluation> models;
  std::vector<DriverTiming> timing;
  ModeDistributions distributions;
  KsResult lateral_ks;  // LaneKeep vs Prepare
  std::vector<ProbabilityRow> probability;
  std::size_t episodes = 0;
  std::size_t excluded_episodes = 0;
};

/// report.txt, accuracy_table.csv, confusion.csv, timing.csv,
/// lateral_hist.csv, transitions.csv and (if present) prob_trace.csv.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

/// Human-readable summary.
std::string format_report(const EvalReport& report);

}  // namespace laneintent
