#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hspsim/analysis.hpp"
#include "hspsim/config.hpp"
#include "hspsim/counting.hpp"
#include "hspsim/errors.hpp"
#include "hspsim/homodyne.hpp"
#include "hspsim/version.hpp"

namespace hspsim {

using json = nlohmann::ordered_json;

/// Identity stamp embedded in every output file so a result can always be
/// traced to the exact run that produced it.
struct Provenance {
  uint64_t seed = 0;
  std::string config_hash;
  std::string version = kVersion;
};

inline std::string provenance_comment(const Provenance& p) {
  return "# provenance: seed=" + std::to_string(p.seed) +
         " config_hash=" + p.config_hash + " version=" + p.version;
}

inline json provenance_json(const Provenance& p) {
  return json{{"seed", p.seed},
              {"config_hash", p.config_hash},
              {"version", p.version}};
}

namespace detail {

inline void write_text_file(const std::string& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail

/// Creates the output directory if needed; any filesystem failure is an
/// I/O error, not a crash.
inline void ensure_output_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output dir " + dir + ": " + ec.message());
}

/// Flat CSV row with the field names exactly as in CountsRecord.
inline void write_counts_csv(const std::string& path, const CountsRecord& rec,
                             const Provenance& prov) {
  std::ostringstream out;
  out << provenance_comment(prov) << '\n';
  out << "n_pulses,N_h,N_c,N_1,N_2,N_12,N_h1,N_h2,N_h12,f_p\n";
  out << rec.n_pulses << ',' << rec.N_h << ',' << rec.N_c << ',' << rec.N_1
      << ',' << rec.N_2 << ',' << rec.N_12 << ',' << rec.N_h1 << ','
      << rec.N_h2 << ',' << rec.N_h12 << ',' << detail::format_g17(rec.f_p)
      << '\n';
  detail::write_text_file(path, out.str());
}

inline json counts_json(const CountsRecord& rec, const Provenance& prov) {
  return json{{"n_pulses", rec.n_pulses},
              {"N_h", rec.N_h},
              {"N_c", rec.N_c},
              {"N_1", rec.N_1},
              {"N_2", rec.N_2},
              {"N_12", rec.N_12},
              {"N_h1", rec.N_h1},
              {"N_h2", rec.N_h2},
              {"N_h12", rec.N_h12},
              {"f_p", rec.f_p},
              {"provenance", provenance_json(prov)}};
}

inline void write_json_file(const std::string& path, const json& j) {
  detail::write_text_file(path, j.dump(2) + "\n");
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt JSON in " + path + ": " + e.what());
  }
}

/// Two-column waveform export (t_ns, volts), plotter-ready.
inline void write_waveform_csv(const std::string& path, const Waveform& wf,
                               const Provenance& prov) {
  std::ostringstream out;
  out << provenance_comment(prov) << '\n';
  out << "t_ns,volts\n";
  for (size_t k = 0; k < wf.samples.size(); ++k)
    out << detail::format_g17(k * wf.dt_ns) << ','
        << detail::format_g17(wf.samples[k]) << '\n';
  detail::write_text_file(path, out.str());
}

/// One-column quadrature export; the header names the label and record
/// count alongside the provenance stamp.
inline void write_quadrature_csv(const std::string& path,
                                 const QuadratureDataset& ds,
                                 const Provenance& prov) {
  std::ostringstream out;
  out << provenance_comment(prov) << '\n';
  out << "# label=" << ds.label << " n_records=" << ds.n_records
      << " scale_gain=" << detail::format_g17(ds.scale_gain) << '\n';
  out << "value\n";
  for (double v : ds.values) out << detail::format_g17(v) << '\n';
  detail::write_text_file(path, out.str());
}

/// A quadrature dataset re-read from disk plus the provenance it carried.
struct QuadratureFile {
  QuadratureDataset dataset;
  Provenance prov;
};

inline QuadratureFile read_quadrature_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  QuadratureFile out;
  std::string line;
  const auto grab = [&](const std::string& key) -> std::string {
    const size_t at = line.find(key + "=");
    if (at == std::string::npos) return {};
    const size_t start = at + key.size() + 1;
    const size_t end = line.find(' ', start);
    return line.substr(start, end == std::string::npos ? std::string::npos
                                                       : end - start);
  };
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (const auto s = grab("seed"); !s.empty())
        out.prov.seed = detail::parse_uint(path + ": seed", s);
      if (const auto h = grab("config_hash"); !h.empty())
        out.prov.config_hash = h;
      if (const auto v = grab("version"); !v.empty()) out.prov.version = v;
      if (const auto l = grab("label"); !l.empty()) out.dataset.label = l;
      if (const auto g = grab("scale_gain"); !g.empty()) {
        try {
          out.dataset.scale_gain = detail::parse_double("scale_gain", g);
        } catch (const ConfigError& e) {
          throw IoError(path + ": " + e.what());
        }
      }
      continue;
    }
    if (!saw_header) {
      if (line != "value")
        throw IoError(path + ": expected 'value' header, got '" + line + "'");
      saw_header = true;
      continue;
    }
    try {
      out.dataset.values.push_back(
          detail::parse_double(path + ": value", line));
    } catch (const ConfigError& e) {
      throw IoError(e.what());
    }
  }
  if (!saw_header) throw IoError(path + ": missing 'value' header");
  out.dataset.n_records = out.dataset.values.size();
  return out;
}

/// Histogram with the fitted model's per-bin mass in the last column.
inline void write_histogram_csv(const std::string& path, const Histogram& hist,
                                const std::vector<double>& model_mass,
                                const Provenance& prov) {
  if (model_mass.size() != hist.counts.size())
    throw std::invalid_argument(
        "write_histogram_csv: model_mass size mismatch");
  std::ostringstream out;
  out << provenance_comment(prov) << '\n';
  out << "bin_left,bin_right,count,model_mass\n";
  for (size_t k = 0; k < hist.counts.size(); ++k)
    out << detail::format_g17(hist.bin_edges[k]) << ','
        << detail::format_g17(hist.bin_edges[k + 1]) << ',' << hist.counts[k]
        << ',' << detail::format_g17(model_mass[k]) << '\n';
  detail::write_text_file(path, out.str());
}

}  // namespace hspsim
