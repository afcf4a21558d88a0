#include "evabench/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace evabench {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long parsed = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError("config: invalid integer for '" + key + "': " + value);
  }
}

void validate(const Config& cfg) {
  if (cfg.lengths.empty()) {
    throw ConfigError("config: lengths must be nonempty");
  }
  if (!std::is_sorted(cfg.lengths.begin(), cfg.lengths.end()) ||
      std::adjacent_find(cfg.lengths.begin(), cfg.lengths.end()) != cfg.lengths.end()) {
    throw ConfigError("config: lengths must be strictly ascending");
  }
  if (cfg.repeats < 3) {
    throw ConfigError("config: repeats must be >= 3");
  }
  if (cfg.d == 0 || cfg.rf_samples == 0) {
    throw ConfigError("config: d and rf_samples must be positive");
  }
  if (cfg.seeds.empty()) {
    throw ConfigError("config: seeds must be nonempty");
  }
  if (cfg.estimators.empty()) {
    throw ConfigError("config: estimators must be nonempty");
  }
  for (const auto& name : cfg.estimators) {
    if (!known_estimator(name)) {
      throw ConfigError("config: unknown estimator '" + name + "'");
    }
  }
  if (cfg.format != "csv" && cfg.format != "json") {
    throw ConfigError("config: format must be csv or json");
  }
  if (!cfg.fault.empty() && cfg.fault != "eva-group-sign-flip") {
    throw ConfigError("config: unknown fault '" + cfg.fault + "'");
  }
}

}  // namespace

bool known_estimator(const std::string& name) {
  static const std::vector<std::string> names{"softmax",       "performer",   "eva-ideal",
                                              "eva-practical", "eva-causal",  "scatterbrain"};
  return std::find(names.begin(), names.end(), name) != names.end();
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config: cannot read " + path);
  }
  Config cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected 'key = value' at line " + std::to_string(line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) {
      throw ConfigError("config: empty value for '" + key + "'");
    }

    if (key == "lengths") {
      cfg.lengths.clear();
      for (const auto& item : split_list(value)) cfg.lengths.push_back(parse_u64(key, item));
    } else if (key == "d") {
      cfg.d = parse_u64(key, value);
    } else if (key == "K") {
      cfg.k = parse_u64(key, value);
    } else if (key == "C") {
      cfg.c = parse_u64(key, value);
    } else if (key == "estimators") {
      cfg.estimators = split_list(value);
    } else if (key == "seeds") {
      cfg.seeds.clear();
      for (const auto& item : split_list(value)) cfg.seeds.push_back(parse_u64(key, item));
    } else if (key == "repeats") {
      cfg.repeats = parse_u64(key, value);
    } else if (key == "warmup") {
      cfg.warmup = parse_u64(key, value);
    } else if (key == "rf_samples") {
      cfg.rf_samples = parse_u64(key, value);
    } else if (key == "output_path") {
      cfg.output_path = value;
    } else if (key == "format") {
      cfg.format = value;
      cfg.format_explicit = true;
    } else if (key == "seed") {
      cfg.seed = parse_u64(key, value);
    } else if (key == "fault") {
      cfg.fault = value;
    } else {
      throw ConfigError("config: unknown key '" + key + "' at line " + std::to_string(line_no));
    }
  }
  validate(cfg);
  return cfg;
}

}  // namespace evabench
