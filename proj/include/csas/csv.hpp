#pragma once

// Minimal RFC 4180 CSV reading and writing plus ISO-8601 timestamps.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "csas/error.hpp"

namespace csas::csv {

inline std::string escape(std::string_view field) {
    const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs_quotes) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os << ',';
        os << escape(fields[i]);
    }
    os << '\n';
}

// Reads one record, honoring quoted fields that span lines. Returns false at EOF.
inline bool read_row(std::istream& is, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (is.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (is.peek() == '"') {
                    is.get(c);
                    field += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (in_quotes) throw ValidationError("unterminated quoted CSV field");
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double value) {
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
        if (std::strtod(buf, nullptr) == value) break;
    }
    return buf;
}

inline double parse_double(const std::string& text) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ValidationError("not a number: '" + text + "'");
    }
    if (used != text.size()) throw ValidationError("not a number: '" + text + "'");
    return value;
}

inline std::int64_t parse_int(const std::string& text) {
    std::size_t used = 0;
    std::int64_t value = 0;
    try {
        value = std::stoll(text, &used);
    } catch (const std::exception&) {
        throw ValidationError("not an integer: '" + text + "'");
    }
    if (used != text.size()) throw ValidationError("not an integer: '" + text + "'");
    return value;
}

}  // namespace csas::csv

namespace csas {

inline std::int64_t now_millis() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// UTC, millisecond precision: 2024-01-06T15:04:05.123Z
inline std::string iso8601(std::int64_t epoch_millis) {
    const std::time_t seconds = static_cast<std::time_t>(epoch_millis / 1000);
    const int millis = static_cast<int>(epoch_millis % 1000);
    std::tm tm{};
    gmtime_r(&seconds, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, millis);
    return buf;
}

}  // namespace csas
