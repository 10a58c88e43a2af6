#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "clab/core.hpp"
#include "clab/trainer.hpp"

namespace clab {

// ---------------------------------------------------------------------------
// Embedding dump
//
//   offset  size  field
//   0       4     "CLAB"
//   4       1     format version, ASCII '1'
//   5       8     N, uint64 little-endian
//   13      8     d, uint64 little-endian
//   21      1     has_labels, 0 or 1
//   22      8Nd   rows, IEEE-754 binary64 little-endian, row-major
//   ...     4N    labels, uint32 little-endian (only when has_labels = 1)
// ---------------------------------------------------------------------------

inline constexpr std::string_view kDumpMagic = "CLAB";
inline constexpr char kDumpVersion = '1';
inline constexpr std::size_t kDumpHeaderSize = 22;
inline constexpr double kDumpNormWarning = 1e-6;

struct EmbeddingDump {
  Matrix rows;
  std::optional<Labels> labels;

  friend bool operator==(const EmbeddingDump&, const EmbeddingDump&) = default;
};

struct DumpReadResult {
  EmbeddingDump dump;
  /// Rows whose norm differs from one by more than kDumpNormWarning.
  std::vector<std::size_t> off_unit_rows;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

inline std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}

}  // namespace detail

inline std::string encode_dump(const EmbeddingDump& dump) {
  const std::size_t n = dump.rows.rows();
  if (dump.labels && dump.labels->size() != n) throw Error(ErrorCode::ShapeMismatch, "label count mismatch");
  std::string out;
  out.reserve(kDumpHeaderSize + 8 * dump.rows.values().size() + (dump.labels ? 4 * n : 0));
  out.append(kDumpMagic);
  out.push_back(kDumpVersion);
  detail::put_u64(out, n);
  detail::put_u64(out, dump.rows.cols());
  out.push_back(dump.labels ? 1 : 0);
  for (double v : dump.rows.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (dump.labels)
    for (std::uint32_t l : *dump.labels) detail::put_u32(out, l);
  return out;
}

inline DumpReadResult decode_dump(std::string_view bytes) {
  if (bytes.size() < kDumpMagic.size() || bytes.substr(0, kDumpMagic.size()) != kDumpMagic) {
    throw Error(ErrorCode::CorruptHeader, "missing CLAB magic", 0);
  }
  if (bytes.size() < kDumpMagic.size() + 1) throw Error(ErrorCode::CorruptHeader, "header incomplete", bytes.size());
  if (bytes[4] != kDumpVersion) {
    throw Error(ErrorCode::UnsupportedVersion, std::string("dump version '") + bytes[4] + "' is not supported", 4);
  }
  if (bytes.size() < kDumpHeaderSize) throw Error(ErrorCode::CorruptHeader, "header incomplete", bytes.size());
  const std::uint64_t n = detail::get_u64(bytes, 5);
  const std::uint64_t d = detail::get_u64(bytes, 13);
  const auto flag = static_cast<unsigned char>(bytes[21]);
  if (flag > 1) throw Error(ErrorCode::CorruptHeader, "has_labels must be 0 or 1", 21);
  if (n == 0 || d == 0 || n > (std::uint64_t{1} << 32) || d > (std::uint64_t{1} << 24) ||
      n * d > (std::uint64_t{1} << 36)) {
    throw Error(ErrorCode::CorruptHeader, "implausible shape " + std::to_string(n) + "x" + std::to_string(d), 5);
  }
  const std::uint64_t expected = kDumpHeaderSize + 8 * n * d + (flag ? 4 * n : 0);
  if (bytes.size() < expected) {
    throw Error(ErrorCode::TruncatedPayload,
                "payload ends at byte " + std::to_string(bytes.size()) + ", expected " + std::to_string(expected),
                bytes.size());
  }
  if (bytes.size() > expected) {
    throw Error(ErrorCode::CorruptHeader, "trailing bytes after payload", static_cast<std::size_t>(expected));
  }

  DumpReadResult out;
  out.dump.rows = Matrix(n, d);
  std::size_t at = kDumpHeaderSize;
  for (double& v : out.dump.rows.values()) {
    v = std::bit_cast<double>(detail::get_u64(bytes, at));
    at += 8;
  }
  if (flag) {
    out.dump.labels = Labels(n);
    for (auto& l : *out.dump.labels) {
      l = detail::get_u32(bytes, at);
      at += 4;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(std::abs(norm(out.dump.rows.row(i)) - 1.0) <= kDumpNormWarning)) out.off_unit_rows.push_back(i);
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write to " + path + " failed");
}

inline void write_dump(const std::string& path, const EmbeddingDump& dump) { write_file(path, encode_dump(dump)); }

inline DumpReadResult read_dump(const std::string& path) { return decode_dump(read_file(path)); }

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class ReportFormat { Csv, Json };

struct ReportRow {
  double tau = 0.0;
  Variant variant = Variant::Contrastive;
  double alpha = 1.0;
  Snapshot snapshot;
};

inline std::vector<ReportRow> report_rows(const Trajectory& trajectory, const LossConfig& loss) {
  std::vector<ReportRow> rows;
  for (const auto& s : trajectory.snapshots) rows.push_back({loss.tau, loss.variant, loss.alpha, s});
  return rows;
}

inline std::vector<ReportRow> report_rows(const SweepReport& report) {
  std::vector<ReportRow> rows;
  for (const auto& p : report.points) rows.push_back({p.tau, report.variant, report.alpha, p.snapshot});
  return rows;
}

inline std::vector<std::string> report_columns() {
  std::vector<std::string> cols = {"tau",        "variant",   "alpha",      "step",        "mean_loss",
                                   "uniformity", "neg_uniformity", "tolerance", "knn_purity", "mean_pos_sim"};
  for (std::size_t k = 1; k <= kTopNegatives; ++k) cols.push_back("top" + std::to_string(k) + "_neg_sim");
  return cols;
}

/// Locale-independent, 17 significant digits.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::IoError, "malformed number '" + std::string(s) + "'");
  }
  return v;
}

namespace detail {

/// Column values of one row, in report_columns() order, as text. The
/// variant is returned unquoted.
inline std::vector<std::string> report_fields(const ReportRow& r) {
  const Snapshot& s = r.snapshot;
  std::vector<std::string> f = {format_double(r.tau),
                                std::string(to_string(r.variant)),
                                format_double(r.alpha),
                                std::to_string(s.step),
                                format_double(s.mean_loss),
                                format_double(s.uniformity),
                                format_double(-s.uniformity),
                                format_double(s.tolerance),
                                format_double(s.knn_purity),
                                format_double(s.mean_positive_similarity)};
  for (std::size_t k = 0; k < kTopNegatives; ++k) f.push_back(format_double(s.top_negatives.at(k)));
  return f;
}

inline ReportRow report_row_from_fields(const std::vector<std::string>& f) {
  if (f.size() != report_columns().size()) throw Error(ErrorCode::IoError, "report row has wrong column count");
  ReportRow r;
  r.tau = parse_double(f[0]);
  const auto v = parse_variant(f[1]);
  if (!v) throw Error(ErrorCode::IoError, "unknown variant '" + f[1] + "'");
  r.variant = *v;
  r.alpha = parse_double(f[2]);
  r.snapshot.step = static_cast<std::size_t>(std::stoull(f[3]));
  r.snapshot.mean_loss = parse_double(f[4]);
  r.snapshot.uniformity = parse_double(f[5]);
  r.snapshot.tolerance = parse_double(f[7]);
  r.snapshot.knn_purity = parse_double(f[8]);
  r.snapshot.mean_positive_similarity = parse_double(f[9]);
  for (std::size_t k = 0; k < kTopNegatives; ++k) r.snapshot.top_negatives.push_back(parse_double(f[10 + k]));
  return r;
}

}  // namespace detail

inline std::string render_report(const std::vector<ReportRow>& rows, ReportFormat format) {
  if (rows.empty()) throw Error(ErrorCode::InvalidConfig, "report is empty");
  const auto cols = report_columns();
  std::string out;
  if (format == ReportFormat::Csv) {
    for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
    out += '\n';
    for (const auto& r : rows) {
      const auto f = detail::report_fields(r);
      for (std::size_t c = 0; c < f.size(); ++c) out += (c ? "," : "") + f[c];
      out += '\n';
    }
    return out;
  }
  out += "[\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto f = detail::report_fields(rows[i]);
    out += "  {";
    for (std::size_t c = 0; c < f.size(); ++c) {
      out += (c ? ", \"" : "\"") + cols[c] + "\": ";
      out += c == 1 ? "\"" + f[c] + "\"" : f[c];
    }
    out += i + 1 < rows.size() ? "},\n" : "}\n";
  }
  out += "]\n";
  return out;
}

inline void write_report(const std::vector<ReportRow>& rows, const std::string& path, ReportFormat format) {
  write_file(path, render_report(rows, format));
}

/// Parses the CSV form written by render_report.
inline std::vector<ReportRow> parse_report_csv(std::string_view text) {
  std::vector<ReportRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::IoError, "report is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header != report_columns()) throw Error(ErrorCode::IoError, "unexpected report header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    rows.push_back(detail::report_row_from_fields(f));
  }
  return rows;
}

}  // namespace clab
