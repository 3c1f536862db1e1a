#include "ionhom/timetag_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace ionhom {

namespace {

constexpr char kMagic[4] = {'I', 'T', 'G', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
}

template <class T>
T get_le(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
    return static_cast<T>(v);
}

std::string format_number(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

std::vector<std::uint8_t> encode_timetags(const TimeTagFile& file) {
    std::vector<std::uint8_t> out;
    out.reserve(kTimeTagHeaderSize + kTimeTagRecordSize * file.records.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint32_t>(out, file.resolution_ps);
    out.push_back(file.channel_count);
    out.insert(out.end(), 3, 0);
    put_le<std::uint64_t>(out, file.records.size());
    for (const auto& r : file.records) {
        require(r.time >= 0, "time tags must be non-negative");
        out.push_back(r.channel);
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(r.time));
    }
    return out;
}

TimeTagFile decode_timetags(std::span<const std::uint8_t> b) {
    if (b.size() < kTimeTagHeaderSize) throw ParseError("truncated time-tag header", b.size());
    if (std::memcmp(b.data(), kMagic, 4) != 0) throw ParseError("bad magic, expected ITG1", 0);
    if (get_le<std::uint32_t>(b, 4) != kVersion) throw ParseError("unsupported time-tag version", 4);

    TimeTagFile f;
    f.resolution_ps = get_le<std::uint32_t>(b, 8);
    if (f.resolution_ps != 1) throw ParseError("unsupported resolution (only 1 ps)", 8);
    f.channel_count = b[12];
    const auto count = get_le<std::uint64_t>(b, 16);
    const std::uint64_t payload = b.size() - kTimeTagHeaderSize;
    if (payload / kTimeTagRecordSize < count)
        throw ParseError("record count " + std::to_string(count) + " exceeds file payload",
                         kTimeTagHeaderSize + (payload / kTimeTagRecordSize) * kTimeTagRecordSize);
    if (payload != count * kTimeTagRecordSize)
        throw ParseError("trailing bytes after " + std::to_string(count) + " records",
                         kTimeTagHeaderSize + count * kTimeTagRecordSize);

    f.records.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        const std::size_t at = kTimeTagHeaderSize + k * kTimeTagRecordSize;
        const std::uint8_t channel = b[at];
        const auto t = get_le<std::uint64_t>(b, at + 1);
        if (channel >= f.channel_count) throw ParseError("channel out of range in record " + std::to_string(k), at);
        if (t > static_cast<std::uint64_t>(INT64_MAX)) throw ParseError("timestamp overflow", at + 1);
        const auto time = static_cast<Picoseconds>(t);
        if (!f.records.empty() && time < f.records.back().time)
            throw ParseError("records not sorted at record " + std::to_string(k), at);
        f.records.push_back({channel, time});
    }
    return f;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_timetag_file(const std::filesystem::path& path, const TimeTagFile& file) {
    write_file_atomic(path, encode_timetags(file));
}

TimeTagFile read_timetag_file(const std::filesystem::path& path) { return decode_timetags(read_file_bytes(path)); }

std::string histogram_csv(const CorrelationHistogram& hist, std::optional<double> live_time) {
    std::optional<NormalizedCurve> curve;
    std::string mode = live_time ? "live_time" : "span";
    try {
        curve = normalize(hist, live_time);
    } catch (const UndefinedCorrelation&) {
        mode = "undefined";
    }

    std::ostringstream o;
    o << "# ionhom correlation histogram\n";
    o << "# bin_width_ps=" << hist.bin_width << "\n";
    o << "# window_ps=" << hist.window << "\n";
    o << "# n_start=" << hist.n_start << "\n";
    o << "# n_stop=" << hist.n_stop << "\n";
    o << "# span_ps=" << hist.span << "\n";
    if (live_time) o << "# live_time_s=" << format_number(*live_time) << "\n";
    o << "# normalization=" << mode << "\n";
    o << "delay_ps,counts,normalized,stat_err\n";
    char buf[128];
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        const double v = curve ? curve->values[k] : 0.0, e = curve ? curve->stat_err[k] : 0.0;
        std::snprintf(buf, sizeof buf, "%.1f,%lld,%.10g,%.10g\n", hist.bin_center(k),
                      static_cast<long long>(hist.counts[k]), v, e);
        o << buf;
    }
    return o.str();
}

HistogramCsv parse_histogram_csv(const std::string& text) {
    HistogramCsv out;
    std::map<std::string, std::string> meta;
    std::istringstream in(text);
    std::string line;
    std::uint64_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                auto key = line.substr(1, eq - 1);
                key.erase(0, key.find_first_not_of(' '));
                meta[key] = line.substr(eq + 1);
            }
            continue;
        }
        if (!header_seen) {
            if (line.rfind("delay_ps,counts", 0) != 0) throw ParseError("missing CSV header row", line_no);
            header_seen = true;
            continue;
        }
        double delay = 0, value = 0, err = 0;
        long long count = 0;
        if (std::sscanf(line.c_str(), "%lf,%lld,%lf,%lf", &delay, &count, &value, &err) != 4)
            throw ParseError("malformed CSV row", line_no);
        out.hist.counts.push_back(count);
        out.curve.delays.push_back(delay / kPsPerSecond);
        out.curve.values.push_back(value);
        out.curve.stat_err.push_back(err);
    }
    if (!header_seen) throw ParseError("missing CSV header row", line_no);

    auto get = [&](const char* key) -> long long {
        const auto it = meta.find(key);
        if (it == meta.end()) throw ParseError(std::string("missing metadata '") + key + "'", 0);
        return std::stoll(it->second);
    };
    out.hist.bin_width = get("bin_width_ps");
    out.hist.window = get("window_ps");
    out.hist.n_start = get("n_start");
    out.hist.n_stop = get("n_stop");
    out.hist.span = get("span_ps");
    if (out.hist.bin_width <= 0 ||
        out.hist.counts.size() != static_cast<std::size_t>(2 * out.hist.window / out.hist.bin_width))
        throw ParseError("row count does not match bin_width_ps/window_ps", 0);
    return out;
}

std::string curve_csv(const NormalizedCurve& curve, const std::vector<std::string>& comments) {
    std::ostringstream o;
    for (const auto& c : comments) o << "# " << c << "\n";
    o << "delay_ps,value,stat_err\n";
    char buf[96];
    for (std::size_t k = 0; k < curve.delays.size(); ++k) {
        const double e = k < curve.stat_err.size() ? curve.stat_err[k] : 0.0;
        std::snprintf(buf, sizeof buf, "%.1f,%.10g,%.10g\n", curve.delays[k] * kPsPerSecond, curve.values[k], e);
        o << buf;
    }
    return o.str();
}

}  // namespace ionhom
