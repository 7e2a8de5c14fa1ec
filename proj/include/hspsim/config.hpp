#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hspsim/counting.hpp"
#include "hspsim/errors.hpp"
#include "hspsim/homodyne.hpp"
#include "hspsim/pair_source.hpp"

namespace hspsim {

/// One fully resolved run: physics blocks plus orchestration knobs. Loaded
/// from a sectioned plain-text file; every key is checked against the known
/// schema so a typo in a physics parameter fails loudly instead of being
/// silently ignored.
struct RunConfig {
  uint64_t seed = 0;        ///< required in [run]
  uint64_t n_pulses = 0;    ///< required in [run]
  uint64_t n_records = 17500;
  int n_threads = 0;        ///< 0 = hardware concurrency
  std::string output_dir = ".";

  SourceParams source;
  DetectorParams detector;
  PulseShapeParams pulse_shape;

  double eta_total = 0.0;   ///< overall efficiency for the homodyne mixture
  int mixture_cutoff = 16;

  int n_bins = 80;
  bool has_budget = false;  ///< true when all three budget inputs are given
  double eta_heralding = 0.0;
  double eta_hd = 0.0;
  double eta_transmission = 0.0;

  bool has_sweep = false;
  std::vector<double> pump_levels;
  uint64_t pulses_per_level = 0;

  std::string config_hash;  ///< FNV-1a of the canonical effective config
};

namespace detail {

inline double parse_double(const std::string& path, const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ConfigError(path + ": not a number: '" + text + "'");
  return v;
}

inline uint64_t parse_uint(const std::string& path, const std::string& text) {
  if (text.empty() || text[0] == '-')
    throw ConfigError(path + ": not a non-negative integer: '" + text + "'");
  const char* begin = text.c_str();
  char* end = nullptr;
  const uint64_t v = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw ConfigError(path + ": not a non-negative integer: '" + text + "'");
  return v;
}

inline std::vector<double> parse_double_list(const std::string& path,
                                             const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const size_t a = item.find_first_not_of(" \t");
    const size_t b = item.find_last_not_of(" \t");
    if (a == std::string::npos)
      throw ConfigError(path + ": empty list element");
    out.push_back(parse_double(path, item.substr(a, b - a + 1)));
  }
  if (out.empty()) throw ConfigError(path + ": empty list");
  return out;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// 64-bit FNV-1a as a 16-digit hex string.
inline std::string fnv1a_hex(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

/// Raw section -> key -> value store with duplicate detection; keys are
/// removed as the schema consumes them so leftovers are reportable.
class KeyStore {
 public:
  void insert(const std::string& section, const std::string& key,
              const std::string& value) {
    auto& sec = sections_[section];
    if (!sec.emplace(key, value).second)
      throw ConfigError(section + "." + key + ": duplicate key");
  }

  std::optional<std::string> take(const std::string& section,
                                  const std::string& key) {
    auto sec = sections_.find(section);
    if (sec == sections_.end()) return std::nullopt;
    auto it = sec->second.find(key);
    if (it == sec->second.end()) return std::nullopt;
    std::string value = it->second;
    sec->second.erase(it);
    return value;
  }

  void reject_leftovers() const {
    for (const auto& [section, keys] : sections_) {
      if (!keys.empty())
        throw ConfigError(section + "." + keys.begin()->first +
                          ": unknown key");
    }
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

inline KeyStore tokenize_config(const std::string& text) {
  KeyStore store;
  std::stringstream ss(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    // Strip comments: full-line or following whitespace.
    size_t cut = std::string::npos;
    for (size_t i = 0; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') &&
          (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1])))) {
        cut = i;
        break;
      }
    }
    if (cut != std::string::npos) line.erase(cut);
    const size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    const size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header '" + line + "'");
      section = line.substr(1, line.size() - 2);
      static const char* kSections[] = {"run",      "source",   "detector",
                                        "pulse_shape", "homodyne", "analysis",
                                        "pump_sweep"};
      bool known = false;
      for (const char* s : kSections) known = known || section == s;
      if (!known)
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": unknown section [" + section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value, got '" + line + "'");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": key outside any [section]");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto trim = [](std::string& s) {
      const size_t x = s.find_first_not_of(" \t");
      const size_t y = s.find_last_not_of(" \t");
      s = x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    trim(key);
    trim(value);
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key or value");
    store.insert(section, key, value);
  }
  return store;
}

}  // namespace detail

/// Canonical serialization of the effective config: fixed field order, full
/// double precision. Two configs hash alike iff every effective parameter
/// matches, regardless of file formatting or override route.
inline std::string canonical_config_string(const RunConfig& c) {
  using detail::format_g17;
  std::ostringstream out;
  out << "run.seed=" << c.seed << '\n';
  out << "run.n_pulses=" << c.n_pulses << '\n';
  out << "run.n_records=" << c.n_records << '\n';
  out << "source.s1=" << format_g17(c.source.s1) << '\n';
  out << "source.pump_photons=" << format_g17(c.source.pump_photons) << '\n';
  out << "source.schmidt_weights=";
  for (size_t i = 0; i < c.source.schmidt_weights.size(); ++i)
    out << (i ? "," : "") << format_g17(c.source.schmidt_weights[i]);
  out << '\n';
  out << "source.raman_mean_s=" << format_g17(c.source.raman_mean_s) << '\n';
  out << "source.raman_mean_i=" << format_g17(c.source.raman_mean_i) << '\n';
  out << "source.rep_rate_hz=" << format_g17(c.source.rep_rate_hz) << '\n';
  out << "detector.eta_spd=" << format_g17(c.detector.eta_spd) << '\n';
  out << "detector.dark_prob=" << format_g17(c.detector.dark_prob) << '\n';
  out << "detector.splitter_ratio=" << format_g17(c.detector.splitter_ratio)
      << '\n';
  out << "detector.eta_channel_s=" << format_g17(c.detector.eta_channel_s)
      << '\n';
  out << "detector.eta_channel_i=" << format_g17(c.detector.eta_channel_i)
      << '\n';
  out << "pulse_shape.tau_rise=" << format_g17(c.pulse_shape.tau_rise) << '\n';
  out << "pulse_shape.tau_fall=" << format_g17(c.pulse_shape.tau_fall) << '\n';
  out << "pulse_shape.window_ns=" << format_g17(c.pulse_shape.window_ns)
      << '\n';
  out << "pulse_shape.leak_amplitude="
      << format_g17(c.pulse_shape.leak_amplitude) << '\n';
  out << "pulse_shape.leak_freq_hz=" << format_g17(c.pulse_shape.leak_freq_hz)
      << '\n';
  out << "pulse_shape.noise_sigma=" << format_g17(c.pulse_shape.noise_sigma)
      << '\n';
  out << "pulse_shape.sample_rate=" << format_g17(c.pulse_shape.sample_rate)
      << '\n';
  out << "pulse_shape.gain=" << format_g17(c.pulse_shape.gain) << '\n';
  out << "homodyne.eta_total=" << format_g17(c.eta_total) << '\n';
  out << "homodyne.cutoff=" << c.mixture_cutoff << '\n';
  out << "analysis.n_bins=" << c.n_bins << '\n';
  if (c.has_budget) {
    out << "analysis.eta_heralding=" << format_g17(c.eta_heralding) << '\n';
    out << "analysis.eta_hd=" << format_g17(c.eta_hd) << '\n';
    out << "analysis.eta_transmission=" << format_g17(c.eta_transmission)
        << '\n';
  }
  if (c.has_sweep) {
    out << "pump_sweep.pump_levels=";
    for (size_t i = 0; i < c.pump_levels.size(); ++i)
      out << (i ? "," : "") << format_g17(c.pump_levels[i]);
    out << '\n';
    out << "pump_sweep.pulses_per_level=" << c.pulses_per_level << '\n';
  }
  return out.str();
}

/// Parses config text into a validated RunConfig. Optional overrides stand
/// in for the command-line flags and take effect before validation and
/// hashing. Unknown sections or keys, duplicates, malformed numbers, and
/// physics-range violations all raise ConfigError with the field path.
inline RunConfig parse_config_text(
    const std::string& text,
    std::optional<uint64_t> seed_override = std::nullopt,
    std::optional<uint64_t> pulses_override = std::nullopt,
    std::optional<std::string> out_override = std::nullopt) {
  using namespace detail;
  KeyStore store = tokenize_config(text);
  RunConfig c;

  const auto take_double = [&](const char* sec, const char* key, double* dst) {
    if (auto v = store.take(sec, key))
      *dst = parse_double(std::string(sec) + "." + key, *v);
  };
  const auto take_uint = [&](const char* sec, const char* key, uint64_t* dst) {
    if (auto v = store.take(sec, key)) {
      *dst = parse_uint(std::string(sec) + "." + key, *v);
      return true;
    }
    return false;
  };

  const bool has_seed = take_uint("run", "seed", &c.seed);
  const bool has_pulses = take_uint("run", "n_pulses", &c.n_pulses);
  take_uint("run", "n_records", &c.n_records);
  uint64_t threads = 0;
  if (take_uint("run", "n_threads", &threads))
    c.n_threads = static_cast<int>(threads);
  if (auto v = store.take("run", "output_dir")) c.output_dir = *v;

  take_double("source", "s1", &c.source.s1);
  take_double("source", "pump_photons", &c.source.pump_photons);
  take_double("source", "raman_mean_s", &c.source.raman_mean_s);
  take_double("source", "raman_mean_i", &c.source.raman_mean_i);
  take_double("source", "rep_rate_hz", &c.source.rep_rate_hz);
  const auto weights = store.take("source", "schmidt_weights");
  const auto schmidt_k = store.take("source", "schmidt_k");
  uint64_t n_modes = 8;
  const bool has_n_modes = take_uint("source", "n_modes", &n_modes);
  if (weights && schmidt_k)
    throw ConfigError(
        "source.schmidt_k: give either schmidt_weights or schmidt_k, not "
        "both");
  if (weights) {
    if (has_n_modes)
      throw ConfigError("source.n_modes: only valid with schmidt_k");
    c.source.schmidt_weights =
        parse_double_list("source.schmidt_weights", *weights);
  } else if (schmidt_k) {
    const double k = parse_double("source.schmidt_k", *schmidt_k);
    if (n_modes < 1 || n_modes > 64)
      throw ConfigError("source.n_modes: must be in [1, 64]");
    try {
      c.source.schmidt_weights =
          schmidt_weights_for_target_K(k, static_cast<int>(n_modes));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("source.schmidt_k: ") + e.what());
    }
  } else {
    throw ConfigError(
        "source.schmidt_weights: required (give schmidt_weights or "
        "schmidt_k)");
  }

  take_double("detector", "eta_spd", &c.detector.eta_spd);
  take_double("detector", "dark_prob", &c.detector.dark_prob);
  take_double("detector", "splitter_ratio", &c.detector.splitter_ratio);
  take_double("detector", "eta_channel_s", &c.detector.eta_channel_s);
  take_double("detector", "eta_channel_i", &c.detector.eta_channel_i);

  take_double("pulse_shape", "tau_rise", &c.pulse_shape.tau_rise);
  take_double("pulse_shape", "tau_fall", &c.pulse_shape.tau_fall);
  take_double("pulse_shape", "window_ns", &c.pulse_shape.window_ns);
  take_double("pulse_shape", "leak_amplitude", &c.pulse_shape.leak_amplitude);
  take_double("pulse_shape", "leak_freq_hz", &c.pulse_shape.leak_freq_hz);
  take_double("pulse_shape", "noise_sigma", &c.pulse_shape.noise_sigma);
  take_double("pulse_shape", "sample_rate", &c.pulse_shape.sample_rate);
  take_double("pulse_shape", "gain", &c.pulse_shape.gain);

  take_double("homodyne", "eta_total", &c.eta_total);
  uint64_t cutoff = 0;
  if (take_uint("homodyne", "cutoff", &cutoff))
    c.mixture_cutoff = static_cast<int>(cutoff);

  uint64_t bins = 0;
  if (take_uint("analysis", "n_bins", &bins)) c.n_bins = static_cast<int>(bins);
  const bool b1 = [&] {
    if (auto v = store.take("analysis", "eta_heralding")) {
      c.eta_heralding = parse_double("analysis.eta_heralding", *v);
      return true;
    }
    return false;
  }();
  const bool b2 = [&] {
    if (auto v = store.take("analysis", "eta_hd")) {
      c.eta_hd = parse_double("analysis.eta_hd", *v);
      return true;
    }
    return false;
  }();
  const bool b3 = [&] {
    if (auto v = store.take("analysis", "eta_transmission")) {
      c.eta_transmission = parse_double("analysis.eta_transmission", *v);
      return true;
    }
    return false;
  }();
  if (b1 != b2 || b2 != b3)
    throw ConfigError(
        "analysis.eta_heralding/eta_hd/eta_transmission: give all three "
        "budget inputs or none");
  c.has_budget = b1;

  if (auto v = store.take("pump_sweep", "pump_levels")) {
    c.pump_levels = parse_double_list("pump_sweep.pump_levels", *v);
    c.has_sweep = true;
  }
  if (!take_uint("pump_sweep", "pulses_per_level", &c.pulses_per_level)) {
    if (c.has_sweep)
      throw ConfigError("pump_sweep.pulses_per_level: required with a sweep");
  } else if (!c.has_sweep) {
    throw ConfigError("pump_sweep.pump_levels: required with a sweep");
  } else if (c.pulses_per_level == 0) {
    throw ConfigError("pump_sweep.pulses_per_level: must be > 0");
  }

  store.reject_leftovers();

  if (seed_override) {
    c.seed = *seed_override;
  } else if (!has_seed) {
    throw ConfigError("run.seed: required (no silent default)");
  }
  if (pulses_override) {
    c.n_pulses = *pulses_override;
  } else if (!has_pulses) {
    throw ConfigError("run.n_pulses: required (no silent default)");
  }
  if (out_override) c.output_dir = *out_override;
  if (c.n_pulses == 0) throw ConfigError("run.n_pulses: must be > 0");
  if (c.n_records < 2) throw ConfigError("run.n_records: must be >= 2");
  if (c.n_threads < 0) throw ConfigError("run.n_threads: must be >= 0");
  if (c.eta_total < 0.0 || c.eta_total > 1.0)
    throw ConfigError("homodyne.eta_total: must be in [0,1]");
  if (c.mixture_cutoff < 2)
    throw ConfigError("homodyne.cutoff: must be >= 2");
  if (c.n_bins < 2) throw ConfigError("analysis.n_bins: must be >= 2");
  if (c.has_budget) {
    const auto ok = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!ok(c.eta_heralding) || !ok(c.eta_hd) || !ok(c.eta_transmission))
      throw ConfigError("analysis.eta_*: budget inputs must be in (0,1]");
  }
  for (double level : c.pump_levels) {
    if (level < 0.0)
      throw ConfigError("pump_sweep.pump_levels: negative pump level");
  }

  try {
    c.source.validate();
    c.detector.validate();
    c.pulse_shape.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  c.config_hash = detail::fnv1a_hex(canonical_config_string(c));
  return c;
}

/// Recomputes config_hash after a caller mutates the config in place.
inline void refresh_config_hash(RunConfig& c) {
  c.config_hash = detail::fnv1a_hex(canonical_config_string(c));
}

/// Loads and validates a config file, applying any CLI overrides.
inline RunConfig load_run_config(
    const std::string& path,
    std::optional<uint64_t> seed_override = std::nullopt,
    std::optional<uint64_t> pulses_override = std::nullopt,
    std::optional<std::string> out_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), seed_override, pulses_override,
                           out_override);
}

}  // namespace hspsim
