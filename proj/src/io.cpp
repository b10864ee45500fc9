#include "mmdiff/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mmdiff {

namespace {

std::string trim(std::string s) {
    auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string join_lines(const std::vector<std::size_t>& lines) {
    std::string s;
    const std::size_t shown = std::min<std::size_t>(lines.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) {
        if (i) s += ", ";
        s += std::to_string(lines[i]);
    }
    if (lines.size() > shown) s += ", ... (" + std::to_string(lines.size()) + " in total)";
    return s;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

TimeSeries ingest_csv(std::istream& in, std::optional<double> delta) {
    if (delta && !(*delta > 0.0 && std::isfinite(*delta))) {
        throw std::invalid_argument("ingest_csv: delta must be positive");
    }
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    std::size_t header_line = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        header = split(t);
        header_line = line_no;
        break;
    }
    if (header.empty()) throw IngestError("ingest_csv: no header row", {});
    if (std::all_of(header.begin(), header.end(), [](const auto& h) { return parse_number(h).has_value(); })) {
        throw IngestError("ingest_csv: line " + std::to_string(header_line) + " is numeric; a header row is required",
                          {header_line});
    }

    std::optional<std::size_t> time_col;
    std::size_t value_col = 0;
    auto find = [&](const char* name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (lower(header[i]) == name) return i;
        }
        return std::nullopt;
    };
    if (auto v = find("value")) {
        value_col = *v;
        time_col = find("time");
    } else if (header.size() == 1) {
        value_col = 0;
    } else if (header.size() == 2) {
        time_col = 0;
        value_col = 1;
    } else {
        throw IngestError("ingest_csv: cannot tell which column holds the values; name it \"value\"",
                          {header_line});
    }
    if (!time_col && !delta) {
        throw std::invalid_argument("ingest_csv: the file has no time column; supply delta");
    }

    TimeSeries ts;
    std::vector<std::size_t> row_lines;
    std::vector<std::size_t> bad;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto fields = split(t);
        std::optional<double> value;
        std::optional<double> time;
        if (fields.size() == header.size()) {
            value = parse_number(fields[value_col]);
            if (time_col) time = parse_number(fields[*time_col]);
        }
        if (!value || (time_col && !time)) {
            bad.push_back(line_no);
            continue;
        }
        ts.path.values.push_back(*value);
        if (time) ts.times.push_back(*time);
        row_lines.push_back(line_no);
    }
    if (!bad.empty()) {
        throw IngestError("ingest_csv: non-numeric, non-finite or malformed fields on lines " + join_lines(bad), bad);
    }
    if (ts.path.values.empty()) throw IngestError("ingest_csv: no data rows", {});

    if (!time_col) {
        ts.path.dt = *delta;
        ts.times.resize(ts.path.values.size());
        for (std::size_t i = 0; i < ts.times.size(); ++i) ts.times[i] = *delta * static_cast<double>(i);
        return ts;
    }

    if (ts.times.size() == 1) {
        ts.path.dt = delta.value_or(1.0);
        return ts;
    }
    std::vector<double> diffs(ts.times.size() - 1);
    for (std::size_t i = 1; i < ts.times.size(); ++i) diffs[i - 1] = ts.times[i] - ts.times[i - 1];
    double reference = 0.0;
    if (delta) {
        reference = *delta;
    } else {
        std::vector<double> sorted = diffs;
        // lower median: gaps only lengthen differences
        const std::size_t mid = (sorted.size() - 1) / 2;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
        reference = sorted[mid];
    }
    if (!(reference > 0.0)) {
        throw IngestError("ingest_csv: times must increase", {row_lines[1]});
    }
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        if (std::abs(diffs[i] - reference) > kSpacingTolerance * reference) bad.push_back(row_lines[i + 1]);
    }
    if (!bad.empty()) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "ingest_csv: unequal spacing (expected " << reference << ") at lines " << join_lines(bad);
        throw IngestError(msg.str(), bad);
    }
    ts.path.dt = reference;
    return ts;
}

TimeSeries ingest_csv_file(const std::string& file, std::optional<double> delta) {
    std::ifstream in(file);
    if (!in) throw InputFileError("cannot open input file '" + file + "'");
    return ingest_csv(in, delta);
}

}  // namespace mmdiff
