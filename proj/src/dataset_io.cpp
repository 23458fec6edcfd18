#include "laneintent/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

namespace laneintent {

using nlohmann::ordered_json;

std::string format_double(double v) {
  if (!std::isfinite(v)) throw DomainError("cannot format non-finite number");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Traces

namespace {

ordered_json state_json(const VehicleState& s) { return {s.px, s.py, s.vx, s.vy, s.theta}; }

VehicleState state_from(const ordered_json& j) {
  if (!j.is_array() || j.size() != 5) throw DomainError("vehicle state needs 5 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(),
          j[4].get<double>()};
}

const ordered_json& need(const ordered_json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw DomainError(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

}  // namespace

void write_trace(const Trace& trace, std::ostream& out) {
  ordered_json header;
  header["format"] = kTraceFormat;
  header["version"] = kTraceFormatVersion;
  header["episode_id"] = trace.episode_id;
  header["scenario_id"] = trace.scenario_id;
  header["driver_id"] = trace.driver_id;
  header["seed"] = trace.seed.value;
  header["config_digest"] = trace.config_digest;
  header["collided"] = trace.collided;
  header["partial"] = trace.partial;
  out << header.dump() << '\n';

  std::size_t next_event = 0;
  std::int64_t prev_tick = -1;
  for (const auto& rec : trace.records) {
    const std::int64_t tick = tick_of(rec.time);
    ordered_json line;
    line["t"] = rec.time;
    line["ego"] = state_json(rec.ego);
    line["ctl"] = {rec.ego_controls.accel, rec.ego_controls.lateral_rate_cmd};
    ordered_json truth = ordered_json::array();
    for (const auto& o : rec.others_true) truth.push_back(state_json(o));
    line["true"] = truth;
    ordered_json meas = ordered_json::array();
    for (const auto& m : rec.others_measured) meas.push_back({m.rel_x, m.rel_y, m.rel_vx});
    line["meas"] = meas;
    line["mode"] = mode_tag(rec.mode);
    if (next_event < trace.mode_events.size()) {
      const auto& ev = trace.mode_events[next_event];
      const std::int64_t ev_tick = tick_of(ev.time);
      if (ev_tick <= prev_tick) {
        throw DomainError("write_trace: mode event at t=" + format_double(ev.time) +
                          " does not fall on a record");
      }
      if (ev_tick == tick) {
        ordered_json e;
        e["from"] = mode_tag(ev.from);
        e["to"] = mode_tag(ev.to);
        if (const auto sigma = sigma_for(ev.from, ev.to)) e["sigma"] = sigma_name(*sigma);
        line["event"] = e;
        ++next_event;
      }
    }
    out << line.dump() << '\n';
    prev_tick = tick;
  }
  if (next_event != trace.mode_events.size()) {
    throw DomainError("write_trace: mode events beyond the last record");
  }
}

void write_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ostringstream ss;
  write_trace(trace, ss);
  write_text_file(path, ss.str());
}

Trace read_trace(std::istream& in, const std::string& source) {
  Trace trace;
  std::string text;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> FormatError {
    return FormatError(source + ":" + std::to_string(line_no) + ": " + what);
  };
  auto parse_line = [&](const std::string& s) {
    try {
      return ordered_json::parse(s);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(std::string("malformed line: ") + e.what());
    }
  };

  if (!std::getline(in, text)) {
    line_no = 1;
    throw fail("empty file, expected a trace header");
  }
  line_no = 1;
  const ordered_json header = parse_line(text);
  try {
    if (need(header, "format").get<std::string>() != kTraceFormat) throw fail("not a trace file");
    const int version = need(header, "version").get<int>();
    if (version != kTraceFormatVersion) {
      throw fail("unsupported trace version " + std::to_string(version) + " (expected " +
                 std::to_string(kTraceFormatVersion) + ")");
    }
    trace.episode_id = need(header, "episode_id").get<std::string>();
    trace.scenario_id = need(header, "scenario_id").get<std::string>();
    trace.driver_id = need(header, "driver_id").get<std::string>();
    trace.seed = Seed{need(header, "seed").get<std::uint64_t>()};
    trace.config_digest = need(header, "config_digest").get<std::string>();
    trace.collided = need(header, "collided").get<bool>();
    trace.partial = need(header, "partial").get<bool>();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw fail(std::string("bad header: ") + e.what());
  }

  while (std::getline(in, text)) {
    ++line_no;
    const ordered_json j = parse_line(text);
    try {
      TimestepRecord rec;
      rec.time = need(j, "t").get<double>();
      rec.ego = state_from(need(j, "ego"));
      const auto& ctl = need(j, "ctl");
      if (!ctl.is_array() || ctl.size() != 2) throw DomainError("ctl needs 2 numbers");
      rec.ego_controls = {ctl[0].get<double>(), ctl[1].get<double>()};
      for (const auto& o : need(j, "true")) rec.others_true.push_back(state_from(o));
      for (const auto& m : need(j, "meas")) {
        if (!m.is_array() || m.size() != 3) throw DomainError("measurement needs 3 numbers");
        rec.others_measured.push_back({m[0].get<double>(), m[1].get<double>(), m[2].get<double>()});
      }
      rec.mode = parse_mode_tag(need(j, "mode").get<std::string>());
      if (j.contains("event")) {
        const auto& e = j.at("event");
        trace.mode_events.push_back({rec.time, parse_mode_tag(need(e, "from").get<std::string>()),
                                     parse_mode_tag(need(e, "to").get<std::string>())});
      }
      trace.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw fail(std::string("bad record: ") + e.what());
    }
  }
  if (in.bad()) throw fail("read error");
  return trace;
}

Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace " + path.string());
  return read_trace(in, path.string());
}

// ---------------------------------------------------------------------------
// Split manifest

SplitManifest make_split(std::vector<EpisodeRef> episodes, Seed seed, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DomainError("train_fraction must lie in (0, 1)");
  }
  std::sort(episodes.begin(), episodes.end(), [](const EpisodeRef& a, const EpisodeRef& b) {
    return std::tie(a.driver_id, a.episode_id) < std::tie(b.driver_id, b.episode_id);
  });
  SplitManifest m;
  m.seed = seed;
  m.train_fraction = train_fraction;

  std::size_t driver_index = 0;
  for (std::size_t begin = 0; begin < episodes.size(); ++driver_index) {
    std::size_t end = begin;
    while (end < episodes.size() && episodes[end].driver_id == episodes[begin].driver_id) ++end;
    std::vector<std::string> ids;
    for (std::size_t i = begin; i < end; ++i) ids.push_back(episodes[i].episode_id);
    Rng rng(derive_seed(seed, driver_index));
    rng.shuffle(std::span<std::string>(ids));
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!m.episodes.emplace(ids[i], i < n_train ? Split::Train : Split::Test).second) {
        throw DomainError("duplicate episode id '" + ids[i] + "'");
      }
    }
    begin = end;
  }
  return m;
}

void write_manifest(const SplitManifest& manifest, const std::filesystem::path& path) {
  ordered_json j;
  j["format"] = "laneintent-split";
  j["version"] = 1;
  j["seed"] = manifest.seed.value;
  j["train_fraction"] = manifest.train_fraction;
  ordered_json eps = ordered_json::object();
  for (const auto& [id, split] : manifest.episodes) eps[id] = split == Split::Train ? "train" : "test";
  j["episodes"] = eps;
  write_text_file(path, j.dump(1) + "\n");
}

SplitManifest read_manifest(const std::filesystem::path& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    if (need(j, "format").get<std::string>() != "laneintent-split") {
      throw FormatError(path.string() + ": not a split manifest");
    }
    if (need(j, "version").get<int>() != 1) {
      throw FormatError(path.string() + ": unsupported manifest version");
    }
    SplitManifest m;
    m.seed = Seed{need(j, "seed").get<std::uint64_t>()};
    m.train_fraction = need(j, "train_fraction").get<double>();
    for (const auto& [id, v] : need(j, "episodes").items()) {
      const auto s = v.get<std::string>();
      if (s != "train" && s != "test") throw DomainError("episode '" + id + "' has split " + s);
      m.episodes.emplace(id, s == "train" ? Split::Train : Split::Test);
    }
    return m;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Datasets

LabeledDataset trace_rows(const Trace& trace, const SensorConfig& sensor,
                          const LaneGeometry& geometry) {
  LabeledDataset rows;
  rows.features.reserve(trace.records.size() * kFeatureCount);
  for (const auto& rec : trace.records) {
    const LaneId lane = lane_of(rec.ego.py, geometry);
    const SlotGrid slots = assign_slots(rec.ego, lane, rec.others_measured, geometry);
    const FeatureVector fv = featurize(rec.ego, lane, slots, sensor, geometry);
    std::uint8_t bits = 0;
    for (std::size_t s = 0; s < 3; ++s) bits |= static_cast<std::uint8_t>(fv.present[s] << s);
    rows.add_row(fv.values, rec.mode, trace.episode_id, trace.driver_id,
                 vehicles_in_range(rec.ego, rec.others_true, sensor.detection_radius), bits);
  }
  return rows;
}

namespace {

void append(LabeledDataset& into, const LabeledDataset& rows) {
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    into.add_row(rows.row(i), rows.labels[i], rows.group_names[rows.groups[i]],
                 rows.driver_names[rows.drivers[i]], rows.vehicles_in_range[i], rows.presence[i]);
  }
}

}  // namespace

DatasetBuilder::DatasetBuilder(SensorConfig sensor, LaneGeometry geometry, SplitManifest manifest)
    : sensor_(sensor), geometry_(geometry), manifest_(std::move(manifest)) {}

void DatasetBuilder::add(const Trace& trace) {
  const auto it = manifest_.episodes.find(trace.episode_id);
  if (it == manifest_.episodes.end()) {
    throw DomainError("split manifest has no entry for episode '" + trace.episode_id + "'");
  }
  if (trace.collided || trace.partial) {
    ++bundle_.excluded_traces;
    return;
  }
  ++bundle_.included_traces;
  append(it->second == Split::Train ? bundle_.train : bundle_.test,
         trace_rows(trace, sensor_, geometry_));
}

DatasetBundle DatasetBuilder::finish() && {
  if (bundle_.train.rows() == 0) throw DomainError("dataset: no training rows");
  bundle_.normalizer = Normalizer::fit(bundle_.train.features, bundle_.train.dim);
  normalize_in_place(bundle_.train, bundle_.normalizer);
  normalize_in_place(bundle_.test, bundle_.normalizer);
  return std::move(bundle_);
}

DatasetBundle build_dataset(std::span<const Trace> traces, const SensorConfig& sensor,
                            const LaneGeometry& geometry, const SplitManifest& manifest) {
  DatasetBuilder builder(sensor, geometry, manifest);
  for (const auto& t : traces) builder.add(t);
  return std::move(builder).finish();
}

void normalize_in_place(LabeledDataset& data, const Normalizer& normalizer) {
  if (normalizer.dimension() != data.dim) throw DomainError("normalizer dimension mismatch");
  for (std::size_t i = 0; i < data.rows(); ++i) {
    normalizer.apply_in_place({data.features.data() + i * data.dim, data.dim});
  }
}

void write_feature_table(const LabeledDataset& data, const std::filesystem::path& path) {
  data.validate();
  if (data.dim != kFeatureCount) throw DomainError("feature table expects 22 columns");
  std::string out = "episode_id,driver_id,vehicles_in_range";
  for (auto name : feature_names()) {
    out += ',';
    out += name;
  }
  out += ",mask1,mask2,mask3,label\n";
  for (std::size_t i = 0; i < data.rows(); ++i) {
    out += data.group_names[data.groups[i]];
    out += ',';
    out += data.driver_names[data.drivers[i]];
    out += ',';
    out += std::to_string(data.vehicles_in_range[i]);
    for (double v : data.row(i)) {
      out += ',';
      out += format_double(v);
    }
    for (std::size_t s = 0; s < 3; ++s) out += (data.presence[i] >> s) & 1 ? ",1" : ",0";
    out += ',';
    out += mode_tag(data.labels[i]);
    out += '\n';
  }
  write_text_file(path, out);
}

LabeledDataset read_feature_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature table " + path.string());
  const std::size_t columns = 3 + kFeatureCount + 4;
  LabeledDataset data;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    return FormatError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  std::vector<std::string_view> cells;
  auto split = [&](const std::string& s) {
    cells.clear();
    std::size_t start = 0;
    for (;;) {
      const auto comma = s.find(',', start);
      cells.emplace_back(s.data() + start,
                         (comma == std::string::npos ? s.size() : comma) - start);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  };
  if (!std::getline(in, line)) throw fail("empty feature table");
  line_no = 1;
  split(line);
  if (cells.size() != columns) throw fail("expected " + std::to_string(columns) + " columns");
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    if (cells[3 + f] != feature_names()[f]) {
      throw fail("unexpected column '" + std::string(cells[3 + f]) + "'");
    }
  }
  std::array<double, kFeatureCount> x{};
  while (std::getline(in, line)) {
    ++line_no;
    split(line);
    if (cells.size() != columns) throw fail("expected " + std::to_string(columns) + " columns");
    auto number = [&](std::string_view cell) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw fail("bad number '" + std::string(cell) + "'");
      }
      return v;
    };
    for (std::size_t f = 0; f < kFeatureCount; ++f) x[f] = number(cells[3 + f]);
    std::uint8_t bits = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto cell = cells[3 + kFeatureCount + s];
      if (cell != "0" && cell != "1") throw fail("mask must be 0 or 1");
      bits |= static_cast<std::uint8_t>((cell == "1") << s);
    }
    ModeLabel label;
    try {
      label = parse_mode_tag(cells[columns - 1]);
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
    data.add_row(x, label, cells[0], cells[1], static_cast<int>(number(cells[2])), bits);
  }
  return data;
}

ordered_json normalizer_to_json(const Normalizer& n) {
  ordered_json j;
  j["format"] = "laneintent-normalizer";
  j["version"] = 1;
  j["mean"] = n.mean();
  j["std"] = n.stddev();
  return j;
}

Normalizer normalizer_from_json(const ordered_json& j) {
  try {
    if (need(j, "format").get<std::string>() != "laneintent-normalizer") {
      throw DomainError("not a normalizer file");
    }
    return Normalizer(need(j, "mean").get<std::vector<double>>(),
                      need(j, "std").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("bad normalizer: ") + e.what());
  }
}

void write_normalizer(const Normalizer& n, const std::filesystem::path& path) {
  write_text_file(path, normalizer_to_json(n).dump() + "\n");
}

Normalizer read_normalizer(const std::filesystem::path& path) {
  try {
    return normalizer_from_json(ordered_json::parse(read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace laneintent
