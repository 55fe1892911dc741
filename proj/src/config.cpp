#include "moddrop/config.hpp"

#include "moddrop/error.hpp"

#include <fstream>
#include <sstream>

namespace moddrop {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T, typename F>
T convert(const std::string& origin, const std::string& key, const std::string& text, F parse) {
    try {
        std::size_t used = 0;
        const T v = parse(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::logic_error&) {
        throw InvalidArgument(origin + ": key '" + key + "' has invalid value '" + text + "'");
    }
}

std::uint64_t to_u64(const std::string& origin, const std::string& key, const std::string& text) {
    if (!text.empty() && text[0] == '-')
        throw InvalidArgument(origin + ": key '" + key + "' must be non-negative");
    return convert<std::uint64_t>(origin, key, text, [](const std::string& s, std::size_t* u) {
        return static_cast<std::uint64_t>(std::stoull(s, u, 0));
    });
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
    Config c;
    c.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw InvalidArgument(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidArgument(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw InvalidArgument(where + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (c.values_.contains(full)) throw InvalidArgument(where + ": duplicate key '" + full + "'");
        c.values_[full] = trim(line.substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return convert<double>(origin_, key, it->second,
                           [](const std::string& s, std::size_t* u) { return std::stod(s, u); });
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : to_u64(origin_, key, it->second);
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(get_u64(key, fallback));
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& v = it->second;
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw InvalidArgument(origin_ + ": key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::size_t> Config::get_size_list(const std::string& key,
                                               const std::vector<std::size_t>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::size_t> out;
    for (const auto& item : split_list(it->second))
        out.push_back(static_cast<std::size_t>(to_u64(origin_, key, item)));
    return out;
}

std::vector<std::uint64_t> Config::get_u64_list(const std::string& key,
                                                const std::vector<std::uint64_t>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(it->second)) out.push_back(to_u64(origin_, key, item));
    return out;
}

void Config::reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [k, _] : values_)
        if (!known.contains(k)) throw InvalidArgument(origin_ + ": unknown key '" + k + "'");
}

}  // namespace moddrop
