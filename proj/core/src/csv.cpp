#include "adnlab/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "adnlab/errors.hpp"

namespace adnlab {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

namespace {

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row() {
    if (!rows_.empty() && rows_.back().size() != header_.size()) {
        throw Error("csv: row has " + std::to_string(rows_.back().size()) + " cells, header has " +
                    std::to_string(header_.size()));
    }
    rows_.emplace_back();
    return *this;
}

CsvTable& CsvTable::add(double v) {
    rows_.back().push_back(format_number(v));
    return *this;
}

CsvTable& CsvTable::add(const std::string& s) {
    rows_.back().push_back(quote(s));
    return *this;
}

CsvTable& CsvTable::add_int(long long v) {
    rows_.back().push_back(std::to_string(v));
    return *this;
}

std::string CsvTable::str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    std::vector<std::string> head;
    for (const auto& h : header_) head.push_back(quote(h));
    line(head);
    for (const auto& r : rows_) line(r);
    return out;
}

void CsvTable::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    const std::string s = str();
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace adnlab
