#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace adnlab {

/// Shortest text of a double with 17 significant digits, '.' decimal point.
std::string format_number(double v);

/// In-memory CSV table written with '\n' line ends.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    /// Starts a row; cells are appended with add().
    CsvTable& row();
    CsvTable& add(double v);
    CsvTable& add(const std::string& s);
    CsvTable& add(const char* s) { return add(std::string(s)); }
    CsvTable& add_int(long long v);

    std::size_t rows() const { return rows_.size(); }
    std::string str() const;
    void write(const std::filesystem::path& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace adnlab
