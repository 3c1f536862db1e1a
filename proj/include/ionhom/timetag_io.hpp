#pragma once

// Binary time-tag files and histogram CSVs.
//
// Time-tag layout, little-endian, no padding:
//   header (24 bytes): magic "ITG1" | version u32 = 1 | resolution_ps u32 = 1 |
//                      channel_count u8 | 3 reserved zero bytes | record_count u64
//   record (9 bytes):  channel u8 | timestamp u64 (picoseconds)

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ionhom/correlator.hpp"
#include "ionhom/optics.hpp"

namespace ionhom {

inline constexpr std::size_t kTimeTagHeaderSize = 24;
inline constexpr std::size_t kTimeTagRecordSize = 9;

struct TimeTagFile {
    std::uint8_t channel_count = 2;
    std::uint32_t resolution_ps = 1;
    std::vector<TimeTagRecord> records;
};

std::vector<std::uint8_t> encode_timetags(const TimeTagFile& file);
/// Throws ParseError with the byte offset of the first problem: bad magic or
/// version, truncated or oversized payload, channel out of range, unsorted.
TimeTagFile decode_timetags(std::span<const std::uint8_t> bytes);

/// Writes via a temporary file and rename.
void write_timetag_file(const std::filesystem::path& path, const TimeTagFile& file);
TimeTagFile read_timetag_file(const std::filesystem::path& path);

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Histogram CSV: '#' metadata lines (bin_width_ps, window_ps, n_start,
/// n_stop, span_ps, normalization) then delay_ps,counts,normalized,stat_err.
/// A histogram that cannot be normalized is written with zero normalized
/// values and normalization=undefined.
std::string histogram_csv(const CorrelationHistogram& hist, std::optional<double> live_time = std::nullopt);

struct HistogramCsv {
    CorrelationHistogram hist;
    NormalizedCurve curve;
};
/// Throws ParseError with the line number on malformed input.
HistogramCsv parse_histogram_csv(const std::string& text);

/// Plain comma-separated columns under a header row, preceded by '#' lines.
std::string curve_csv(const NormalizedCurve& curve, const std::vector<std::string>& comments = {});

}  // namespace ionhom
