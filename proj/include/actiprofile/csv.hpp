#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "actiprofile/error.hpp"

namespace actiprofile::csv {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

/// Line-oriented reader for the plain comma-separated files this project
/// reads and writes (no quoting). Blank lines are skipped.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    /// Reads the header and checks it against the expected column names.
    void expect_header(const std::vector<std::string_view>& columns) {
        std::vector<std::string_view> fields;
        if (!next(fields))
            throw ParseError(line_no_ + 1, "missing header");
        if (fields.size() == columns.size()) {
            bool same = true;
            for (std::size_t i = 0; i < columns.size(); ++i) {
                std::string_view f = fields[i];
                if (i == 0 && f.starts_with("\xEF\xBB\xBF"))
                    f.remove_prefix(3);
                same = same && f == columns[i];
            }
            if (same)
                return;
        }
        std::string want;
        for (auto c : columns)
            want += (want.empty() ? "" : ",") + std::string(c);
        throw ParseError(line_no_, "expected header '" + want + "'");
    }

    bool next(std::vector<std::string_view>& fields) {
        while (std::getline(in_, line_)) {
            ++line_no_;
            if (trim(line_).empty())
                continue;
            fields = split(line_);
            return true;
        }
        return false;
    }

    std::size_t line_number() const noexcept { return line_no_; }

private:
    std::istream& in_;
    std::string line_;
    std::size_t line_no_ = 0;
};

template <class T>
T parse_number(std::string_view s, std::size_t line, std::string_view what) {
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ParseError(line, "invalid " + std::string(what) + " '" + std::string(s) + "'");
    return value;
}

/// Shortest round-trip representation, so written files reproduce bit-identically.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

} // namespace actiprofile::csv
