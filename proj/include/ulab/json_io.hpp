#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulab/errors.hpp"

namespace ulab {

using json = nlohmann::json;  // std::map-backed: object keys iterate sorted

namespace detail {

inline void canonical_write(std::string& out, const json& j) {
    switch (j.type()) {
        case json::value_t::null:
            out += "null";
            break;
        case json::value_t::boolean:
            out += j.get<bool>() ? "true" : "false";
            break;
        case json::value_t::number_integer:
            out += std::to_string(j.get<std::int64_t>());
            break;
        case json::value_t::number_unsigned:
            out += std::to_string(j.get<std::uint64_t>());
            break;
        case json::value_t::number_float: {
            // 17 significant digits: enough for an exact double round-trip,
            // so identical values always serialize to identical bytes.
            double v = j.get<double>();
            if (!std::isfinite(v)) throw Error("cannot serialize non-finite float");
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out += buf;
            break;
        }
        case json::value_t::string:
            out += json(j.get<std::string>()).dump();
            break;
        case json::value_t::array: {
            out += '[';
            bool first = true;
            for (const auto& el : j) {
                if (!first) out += ',';
                first = false;
                canonical_write(out, el);
            }
            out += ']';
            break;
        }
        case json::value_t::object: {
            out += '{';
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ',';
                first = false;
                out += json(it.key()).dump();
                out += ':';
                canonical_write(out, it.value());
            }
            out += '}';
            break;
        }
        default:
            throw Error("unsupported json value type");
    }
}

}  // namespace detail

// Canonical serializer: sorted keys, no whitespace, floats with 17
// significant digits. Every report and artifact goes through this so that
// identical runs produce byte-identical files.
inline std::string canonical_dump(const json& j) {
    std::string out;
    detail::canonical_write(out, j);
    return out;
}

inline json parse_json(const std::string& text) {
    return json::parse(text);  // throws nlohmann parse_error on bad input
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("missing artifact: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw Error("write failed: " + path.string());
}

inline json load_json_file(const std::filesystem::path& path) {
    return parse_json(read_text_file(path));
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    write_text_file(path, canonical_dump(j) + "\n");
}

// JSON-lines: one canonical object per line.
inline void write_jsonl_file(const std::filesystem::path& path, const std::vector<json>& lines) {
    std::string out;
    for (const auto& j : lines) {
        out += canonical_dump(j);
        out += '\n';
    }
    write_text_file(path, out);
}

inline std::vector<json> load_jsonl_file(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<json> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        lines.push_back(parse_json(line));
    }
    return lines;
}

}  // namespace ulab
