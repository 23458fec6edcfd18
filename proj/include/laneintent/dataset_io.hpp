#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "laneintent/classifiers.hpp"
#include "laneintent/perception.hpp"
#include "laneintent/simulation.hpp"

namespace laneintent {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// Trace files: one JSON header line, then one JSON line per tick.

inline constexpr std::string_view kTraceFormat = "laneintent-trace";
inline constexpr int kTraceFormatVersion = 1;

/// Malformed or incompatible input; the message names the source and line.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_trace(const Trace& trace, std::ostream& out);
void write_trace(const Trace& trace, const std::filesystem::path& path);
Trace read_trace(std::istream& in, const std::string& source = "<stream>");
Trace read_trace(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Split manifest

enum class Split : std::uint8_t { Train, Test };

struct EpisodeRef {
  std::string episode_id;
  std::string driver_id;
};

struct SplitManifest {
  Seed seed;
  double train_fraction = 0.7;
  std::map<std::string, Split> episodes;

  bool operator==(const SplitManifest&) const = default;
};

/// Per driver: episodes sorted by id, shuffled with a driver-specific
/// stream, first round(train_fraction * n) go to train.
SplitManifest make_split(std::vector<EpisodeRef> episodes, Seed seed, double train_fraction = 0.7);

void write_manifest(const SplitManifest& manifest, const std::filesystem::path& path);
SplitManifest read_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Datasets

struct DatasetBundle {
  LabeledDataset train;
  LabeledDataset test;
  Normalizer normalizer;
  std::size_t excluded_traces = 0;
  std::size_t included_traces = 0;
};

/// Raw feature rows of one trace (no normalization), labelled by record mode.
LabeledDataset trace_rows(const Trace& trace, const SensorConfig& sensor,
                          const LaneGeometry& geometry);

/// Accumulates traces one at a time so callers can stream from disk.
class DatasetBuilder {
 public:
  DatasetBuilder(SensorConfig sensor, LaneGeometry geometry, SplitManifest manifest);

  /// Collided or partial traces are counted and skipped. Throws DomainError
  /// when the manifest has no entry for the trace's episode.
  void add(const Trace& trace);

  /// Fits the normalizer on the train rows and applies it to both sets.
  DatasetBundle finish() &&;

 private:
  SensorConfig sensor_;
  LaneGeometry geometry_;
  SplitManifest manifest_;
  DatasetBundle bundle_;
};

DatasetBundle build_dataset(std::span<const Trace> traces, const SensorConfig& sensor,
                            const LaneGeometry& geometry, const SplitManifest& manifest);

/// Writes data columns in place: x <- (x - mean) / std.
void normalize_in_place(LabeledDataset& data, const Normalizer& normalizer);

/// CSV: episode_id, driver_id, vehicles_in_range, 22 feature columns,
/// mask1..mask3, label.
void write_feature_table(const LabeledDataset& data, const std::filesystem::path& path);
LabeledDataset read_feature_table(const std::filesystem::path& path);

nlohmann::ordered_json normalizer_to_json(const Normalizer& n);
Normalizer normalizer_from_json(const nlohmann::ordered_json& j);
void write_normalizer(const Normalizer& n, const std::filesystem::path& path);
Normalizer read_normalizer(const std::filesystem::path& path);

/// Replaces the file's content; throws std::runtime_error on I/O failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace laneintent
