#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vidmem/errors.hpp"
#include "vidmem/numerics.hpp"

namespace vidmem {

// Plain-text config: `[section]` headers, `key=value` lines, `#` comments.
// Sections may repeat (e.g. one [event] block per planted event).
struct ConfigEntry {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

struct ConfigSection {
    std::string name;
    std::vector<ConfigEntry> entries;
    std::size_t line = 0;
};

namespace config {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<ConfigSection> parse(const std::string& text) {
    std::vector<ConfigSection> sections;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ConfigError("malformed section header '" + line + "'", line_no);
            }
            sections.push_back({trim(line.substr(1, line.size() - 2)), {}, line_no});
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected key=value, got '" + line + "'", line_no);
        }
        if (sections.empty()) {
            throw ConfigError("key '" + trim(line.substr(0, eq)) + "' before any [section]",
                              line_no);
        }
        ConfigEntry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
        if (e.key.empty()) throw ConfigError("empty key", line_no);
        sections.back().entries.push_back(std::move(e));
    }
    return sections;
}

// Typed accessor over one section. Keys are marked as consumed when read;
// finish() rejects anything left over, so typos fail loudly. Defaulted keys
// are reported through `notices` so the CLI can log them.
class SectionView {
public:
    SectionView(const ConfigSection& section, std::vector<std::string>* notices = nullptr)
        : section_(section), notices_(notices) {}

    std::optional<std::string> get(const std::string& key) {
        const ConfigEntry* found = nullptr;
        for (const auto& e : section_.entries) {
            if (e.key != key) continue;
            if (found) {
                throw ConfigError("duplicate key '" + key + "' in [" + section_.name + "]",
                                  e.line);
            }
            found = &e;
        }
        if (!found) return std::nullopt;
        consumed_.insert(key);
        return found->value;
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto v = get(key);
        if (!v) {
            note(key, fallback);
            return fallback;
        }
        return *v;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        auto v = get(key);
        if (!v) {
            note(key, std::to_string(fallback));
            return fallback;
        }
        return parse_u64(*v, key);
    }

    std::uint64_t require_u64(const std::string& key) {
        auto v = get(key);
        if (!v) {
            throw ConfigError("missing required key '" + key + "' in [" + section_.name + "]",
                              section_.line);
        }
        return parse_u64(*v, key);
    }

    double get_f64(const std::string& key, double fallback) {
        auto v = get(key);
        if (!v) {
            note(key, format_double(fallback));
            return fallback;
        }
        return parse_f64(*v, key);
    }

    std::vector<std::size_t> get_index_list(const std::string& key,
                                            std::vector<std::size_t> fallback) {
        auto v = get(key);
        if (!v) return fallback;
        std::vector<std::size_t> out;
        for (const std::string& tok : split(*v, ',')) {
            out.push_back(static_cast<std::size_t>(parse_u64(trim(tok), key)));
        }
        return out;
    }

    std::vector<double> get_f64_list(const std::string& key) {
        auto v = get(key);
        if (!v) {
            throw ConfigError("missing required key '" + key + "' in [" + section_.name + "]",
                              section_.line);
        }
        std::vector<double> out;
        for (const std::string& tok : split(*v, ',')) out.push_back(parse_f64(trim(tok), key));
        return out;
    }

    void finish() const {
        for (const auto& e : section_.entries) {
            if (!consumed_.count(e.key)) {
                throw ConfigError("unknown key '" + e.key + "' in [" + section_.name + "]",
                                  e.line);
            }
        }
    }

    std::uint64_t parse_u64(const std::string& s, const std::string& key) const {
        try {
            std::size_t used = 0;
            const std::uint64_t v = std::stoull(s, &used, 0);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected integer, got '" + s + "'",
                              line_of(key));
        }
    }

    double parse_f64(const std::string& s, const std::string& key) const {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected number, got '" + s + "'",
                              line_of(key));
        }
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == sep) {
                out.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        out.push_back(cur);
        return out;
    }

    static std::string format_double(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%g", v);
        return buf;
    }

private:
    std::size_t line_of(const std::string& key) const {
        for (const auto& e : section_.entries)
            if (e.key == key) return e.line;
        return section_.line;
    }

    void note(const std::string& key, const std::string& value) {
        if (notices_) {
            notices_->push_back("[" + section_.name + "] " + key + " defaulted to " + value);
        }
    }

    const ConfigSection& section_;
    std::vector<std::string>* notices_;
    std::set<std::string> consumed_;
};

inline const ConfigSection* find(const std::vector<ConfigSection>& sections,
                                 const std::string& name) {
    for (const auto& s : sections)
        if (s.name == name) return &s;
    return nullptr;
}

}  // namespace config
}  // namespace vidmem
