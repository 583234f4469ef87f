#pragma once

// Line-oriented "key = value" configuration files. Keys may repeat (for
// list-like entries such as couplings); '#' starts a comment.

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cpgloco {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class KeyValueFile {
public:
    using Entry = std::pair<std::string, std::string>;

    KeyValueFile() = default;

    static KeyValueFile parse(std::string_view text, std::string_view origin = "<string>") {
        KeyValueFile kv;
        std::istringstream in{std::string(text)};
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string body = trim(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string::npos)
                throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
            std::string key = trim(body.substr(0, eq));
            std::string value = trim(body.substr(eq + 1));
            if (key.empty())
                throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": empty key");
            kv.entries_.emplace_back(std::move(key), std::move(value));
        }
        return kv;
    }

    static KeyValueFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        return parse(buf.str(), path);
    }

    void set(const std::string& key, std::string value) {
        for (auto& [k, v] : entries_)
            if (k == key) {
                v = std::move(value);
                return;
            }
        entries_.emplace_back(key, std::move(value));
    }

    void add(const std::string& key, std::string value) { entries_.emplace_back(key, std::move(value)); }

    [[nodiscard]] bool has(std::string_view key) const {
        for (const auto& e : entries_)
            if (e.first == key) return true;
        return false;
    }

    /// Last value wins for scalar keys.
    [[nodiscard]] const std::string* find(std::string_view key) const {
        const std::string* found = nullptr;
        for (const auto& e : entries_)
            if (e.first == key) found = &e.second;
        return found;
    }

    [[nodiscard]] std::vector<std::string> all(std::string_view key) const {
        std::vector<std::string> out;
        for (const auto& e : entries_)
            if (e.first == key) out.push_back(e.second);
        return out;
    }

    [[nodiscard]] std::string get_string(std::string_view key, std::string fallback) const {
        const auto* v = find(key);
        return v ? *v : fallback;
    }

    [[nodiscard]] double get_double(std::string_view key, double fallback) const {
        const auto* v = find(key);
        return v ? to_double(*v, key) : fallback;
    }

    [[nodiscard]] long long get_int(std::string_view key, long long fallback) const {
        const auto* v = find(key);
        return v ? to_int(*v, key) : fallback;
    }

    [[nodiscard]] bool get_bool(std::string_view key, bool fallback) const {
        const auto* v = find(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ConfigError("key '" + std::string(key) + "': expected a boolean, got '" + *v + "'");
    }

    [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }

    [[nodiscard]] std::string to_string() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
        return out;
    }

    static double to_double(std::string_view text, std::string_view key) {
        const std::string s = trim(std::string(text));
        try {
            std::size_t used = 0;
            const double d = std::stod(s, &used);
            if (used == s.size()) return d;
        } catch (const std::exception&) {
        }
        throw ConfigError("key '" + std::string(key) + "': expected a number, got '" + s + "'");
    }

    static long long to_int(std::string_view text, std::string_view key) {
        const std::string s = trim(std::string(text));
        long long out = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (ec != std::errc{} || ptr != s.data() + s.size())
            throw ConfigError("key '" + std::string(key) + "': expected an integer, got '" + s + "'");
        return out;
    }

    static std::vector<std::string> split_words(std::string_view text) {
        std::istringstream in{std::string(text)};
        std::vector<std::string> words;
        for (std::string w; in >> w;) words.push_back(w);
        return words;
    }

    static std::vector<double> to_doubles(std::string_view text, std::string_view key) {
        std::vector<double> out;
        for (const auto& w : split_words(text)) out.push_back(to_double(w, key));
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        const auto first = s.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) return {};
        const auto last = s.find_last_not_of(" \t\r\n");
        return s.substr(first, last - first + 1);
    }

    std::vector<Entry> entries_;
};

/// Shortest round-trip decimal representation of a double.
[[nodiscard]] inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace cpgloco
