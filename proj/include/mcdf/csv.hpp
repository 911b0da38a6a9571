#pragma once
// Minimal CSV assembly: comma-delimited, header row, locale-independent
// numbers. Analytical values carry 12 significant digits, Monte Carlo
// estimates 6.

#include <cstdio>
#include <initializer_list>
#include <string>
#include <vector>

namespace mcdf {

class CsvBuilder {
public:
    explicit CsvBuilder(std::initializer_list<std::string> header) {
        append_row(std::vector<std::string>(header));
    }

    static std::string analytical(double v) { return format(v, 12); }
    static std::string estimate(double v) { return format(v, 6); }
    static std::string integer(long long v) { return std::to_string(v); }

    void append_row(const std::vector<std::string>& cells) {
        std::string line;
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        line += '\n';
        text_ += line;
    }

    const std::string& str() const { return text_; }

private:
    static std::string format(double v, int digits) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.*g", digits, v);
        return buf;
    }
    std::string text_;
};

}  // namespace mcdf
