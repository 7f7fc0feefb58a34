#pragma once

// Minimal sectioned key/value config files:
//   [section]
//   key = value   # comment
// Keys are addressed as "section.key".

#include <map>
#include <string>
#include <vector>

namespace loco {

class KeyValueConfig {
 public:
    KeyValueConfig() = default;
    static KeyValueConfig load(const std::string& path);
    static KeyValueConfig parse(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get(const std::string& key, double fallback) const;
    int get(const std::string& key, int fallback) const;
    bool get(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::map<std::string, std::string>& all() const { return values_; }

 private:
    std::map<std::string, std::string> values_;
};

std::vector<uint64_t> parse_seed_list(const std::string& csv);

}  // namespace loco
