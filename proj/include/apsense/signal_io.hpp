#pragma once

// PPG record, apnea annotation and binary tensor file I/O.
//
// Record layout on disk:
//   <subject>.ppg.csv     header `t_s,ppg`, one sample per row
//   <subject>.meta.json   { "subject_id": str, "fs_hz": number, "ahi": number|null }
//   <subject>.events.csv  header `event_type,start_s,duration_s`
//
// Tensor layout: "APSN" | version u8 (=1) | dtype u8 (1 = f32) | rank u8 |
// rank x u64 dims | row-major f32 payload. Everything little-endian.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "apsense/error.hpp"

namespace apsense {

struct PpgRecord {
  std::string subject_id;
  double fs = 0.0;  // Hz
  std::vector<double> samples;
  std::optional<double> ahi_reference;  // events/hour

  double duration_s() const { return static_cast<double>(samples.size()) / fs; }
};

enum class EventKind { apnea, hypopnea };

struct ApneaEvent {
  EventKind kind = EventKind::apnea;
  double start_s = 0.0;
  double duration_s = 0.0;

  double end_s() const { return start_s + duration_s; }
};

struct AnnotationSet {
  std::vector<ApneaEvent> events;  // sorted by start_s
  std::size_t skipped = 0;         // rows with an unknown event_type
};

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(pos)));
      break;
    }
    out.push_back(trim(line.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline bool is_blank(std::string_view s) { return trim(s).empty(); }

}  // namespace detail

/// `<dir>/<subject>.ppg.csv` -> `<subject>`.
inline std::string record_stem(const std::filesystem::path& record_csv) {
  std::string name = record_csv.filename().string();
  constexpr std::string_view kRecordSuffix = ".ppg.csv";
  if (name.size() > kRecordSuffix.size() &&
      name.compare(name.size() - kRecordSuffix.size(), kRecordSuffix.size(), kRecordSuffix) == 0) {
    name.resize(name.size() - kRecordSuffix.size());
    return name;
  }
  return record_csv.stem().string();
}

/// `<dir>/<subject>.ppg.csv` -> `<dir>/<subject>.<suffix>`.
inline std::filesystem::path sibling_path(const std::filesystem::path& record_csv,
                                          std::string_view suffix) {
  return record_csv.parent_path() / (record_stem(record_csv) + "." + std::string(suffix));
}

inline std::filesystem::path metadata_path(const std::filesystem::path& record_csv) {
  return sibling_path(record_csv, "meta.json");
}

inline std::filesystem::path events_path(const std::filesystem::path& record_csv) {
  return sibling_path(record_csv, "events.csv");
}

/// Reads `<subject>.ppg.csv` and its `<subject>.meta.json` sidecar. The
/// sampling rate comes from the sidecar; timestamps only have to increase.
inline PpgRecord read_record(const std::filesystem::path& path) {
  PpgRecord rec;
  const auto meta_file = metadata_path(path);
  std::ifstream meta_in(meta_file);
  if (!meta_in) throw FormatError("missing metadata sidecar " + meta_file.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid metadata " + meta_file.string() + ": " + e.what());
  }
  if (!meta.contains("fs_hz") || !meta["fs_hz"].is_number())
    throw FormatError("metadata " + meta_file.string() + " lacks numeric fs_hz");
  rec.fs = meta["fs_hz"].get<double>();
  if (!(rec.fs > 0.0) || !std::isfinite(rec.fs))
    throw FormatError("metadata fs_hz must be positive");
  rec.subject_id = meta.value("subject_id", record_stem(path));
  if (meta.contains("ahi") && meta["ahi"].is_number()) rec.ahi_reference = meta["ahi"].get<double>();

  const auto lines = detail::read_lines(path);
  if (lines.empty() || detail::trim(lines[0]) != "t_s,ppg")
    throw FormatError(path.string() + ": expected header `t_s,ppg`");

  std::optional<double> prev_t;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (detail::is_blank(lines[li])) continue;
    const std::size_t row = li;  // data row number, 1-based
    auto cols = detail::split_csv(lines[li]);
    if (cols.size() != 2)
      throw FormatError(path.string() + ": row " + std::to_string(row) + " needs 2 columns");
    auto t = detail::parse_double(cols[0]);
    auto v = detail::parse_double(cols[1]);
    if (!t || !v)
      throw FormatError(path.string() + ": row " + std::to_string(row) + " is not numeric");
    if (!std::isfinite(*v) || !std::isfinite(*t))
      throw DataError(path.string() + ": non-finite value at row " + std::to_string(row));
    if (prev_t && !(*t > *prev_t))
      throw DataError(path.string() + ": non-monotonic timestamp at row " + std::to_string(row));
    prev_t = t;
    rec.samples.push_back(*v);
  }
  if (rec.samples.empty()) throw DataError(path.string() + ": no samples");
  return rec;
}

inline void write_record(const std::filesystem::path& path, const PpgRecord& rec) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    std::string buf = "t_s,ppg\n";
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
      buf += detail::format_double(static_cast<double>(i) / rec.fs);
      buf += ',';
      buf += detail::format_double(rec.samples[i]);
      buf += '\n';
    }
    out << buf;
  }
  nlohmann::ordered_json meta;
  meta["subject_id"] = rec.subject_id;
  meta["fs_hz"] = rec.fs;
  meta["ahi"] = rec.ahi_reference ? nlohmann::ordered_json(*rec.ahi_reference)
                                  : nlohmann::ordered_json(nullptr);
  std::ofstream meta_out(metadata_path(path), std::ios::binary);
  if (!meta_out) throw FormatError("cannot write metadata for " + path.string());
  meta_out << meta.dump(2) << '\n';
}

inline AnnotationSet read_annotations(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty() || detail::trim(lines[0]) != "event_type,start_s,duration_s")
    throw FormatError(path.string() + ": expected header `event_type,start_s,duration_s`");
  AnnotationSet out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (detail::is_blank(lines[li])) continue;
    auto cols = detail::split_csv(lines[li]);
    if (cols.size() != 3)
      throw FormatError(path.string() + ": row " + std::to_string(li) + " needs 3 columns");
    EventKind kind;
    if (cols[0] == "apnea") {
      kind = EventKind::apnea;
    } else if (cols[0] == "hypopnea") {
      kind = EventKind::hypopnea;
    } else {
      ++out.skipped;
      continue;
    }
    auto start = detail::parse_double(cols[1]);
    auto dur = detail::parse_double(cols[2]);
    if (!start || !dur)
      throw FormatError(path.string() + ": row " + std::to_string(li) + " is not numeric");
    if (!std::isfinite(*start) || !std::isfinite(*dur) || *start < 0.0)
      throw DataError(path.string() + ": invalid start at row " + std::to_string(li));
    if (!(*dur > 0.0))
      throw DataError(path.string() + ": non-positive duration at row " + std::to_string(li));
    out.events.push_back({kind, *start, *dur});
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const ApneaEvent& a, const ApneaEvent& b) { return a.start_s < b.start_s; });
  return out;
}

inline void write_annotations(const std::filesystem::path& path, std::span<const ApneaEvent> events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "event_type,start_s,duration_s\n";
  for (const auto& e : events) {
    out << (e.kind == EventKind::apnea ? "apnea" : "hypopnea") << ','
        << detail::format_double(e.start_s) << ',' << detail::format_double(e.duration_s) << '\n';
  }
}

/// Every event must end inside the recording.
inline void check_events_within(std::span<const ApneaEvent> events, double record_duration_s) {
  for (const auto& e : events) {
    if (e.end_s() > record_duration_s)
      throw DataError("event at " + detail::format_double(e.start_s) +
                      " s ends after the recording (" + detail::format_double(record_duration_s) + " s)");
  }
}

// ---------------------------------------------------------------------------
// Tensor files

inline constexpr std::array<char, 4> kTensorMagic{'A', 'P', 'S', 'N'};
inline constexpr std::uint8_t kTensorVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

inline std::vector<std::uint8_t> encode_tensor(std::span<const std::uint64_t> dims,
                                               std::span<const float> values) {
  if (dims.empty() || dims.size() > 4) throw ParameterError("tensor rank must be in [1, 4]");
  std::size_t count = 1;
  for (auto d : dims) count *= static_cast<std::size_t>(d);
  if (count != values.size())
    throw ParameterError("tensor dims describe " + std::to_string(count) + " values, got " +
                         std::to_string(values.size()));

  std::vector<std::uint8_t> bytes;
  bytes.reserve(7 + 8 * dims.size() + 4 * values.size());
  bytes.insert(bytes.end(), kTensorMagic.begin(), kTensorMagic.end());
  bytes.push_back(kTensorVersion);
  bytes.push_back(kDtypeF32);
  bytes.push_back(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims)
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(d >> (8 * b)));
  for (float v : values) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  return bytes;
}

inline Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 7) throw FormatError("tensor header truncated");
  if (!std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin()))
    throw FormatError("tensor magic mismatch");
  if (bytes[4] != kTensorVersion) throw FormatError("unsupported tensor version");
  if (bytes[5] != kDtypeF32) throw FormatError("unsupported tensor dtype");
  const std::size_t rank = bytes[6];
  if (rank < 1 || rank > 4) throw FormatError("tensor rank must be in [1, 4]");
  if (bytes.size() < 7 + 8 * rank) throw FormatError("tensor dims truncated");

  Tensor t;
  std::size_t off = 7;
  std::size_t count = 1;
  for (std::size_t r = 0; r < rank; ++r) {
    std::uint64_t d = 0;
    for (int b = 0; b < 8; ++b) d |= static_cast<std::uint64_t>(bytes[off + b]) << (8 * b);
    off += 8;
    t.dims.push_back(d);
    count *= static_cast<std::size_t>(d);
  }
  if (bytes.size() - off != 4 * count)
    throw FormatError("tensor payload is " + std::to_string(bytes.size() - off) + " bytes, expected " +
                      std::to_string(4 * count));
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i, off += 4) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[off + b]) << (8 * b);
    t.values[i] = std::bit_cast<float>(bits);
  }
  return t;
}

inline void write_tensor(const std::filesystem::path& path, std::span<const std::uint64_t> dims,
                         std::span<const float> values) {
  const auto bytes = encode_tensor(dims, values);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_tensor(path, t.dims, t.values);
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace apsense
