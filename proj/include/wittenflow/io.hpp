#pragma once

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wittenflow/core.hpp"
#include "wittenflow/critical.hpp"
#include "wittenflow/resonance.hpp"

namespace wittenflow {

using Json = nlohmann::json;

// Every emitted file starts with (or contains) the experiment's config hash
// so downstream comparisons can reject mismatched artifacts.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& config_hash, const std::string& header) {
    out_.open(path);
    if (!out_) throw ConfigError("cannot open " + path + " for writing");
    out_ << "# config_hash=" << config_hash << "\n" << header << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ",";
      out_ << cells[i];
    }
    out_ << "\n";
  }
 private:
  std::ofstream out_;
};

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

inline std::string read_config_hash_line(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  const std::string prefix = "# config_hash=";
  if (line.rfind(prefix, 0) != 0) throw ConfigError(path + ": missing config hash header");
  return line.substr(prefix.size());
}

inline void write_critical_points_csv(const std::string& path, const std::string& hash,
                                      const MorseModel& model, const CriticalSet& crits) {
  CsvWriter csv(path, hash, "id,x,y,z,f_value,index,chi_1,chi_2");
  for (const auto& cp : crits.points) {
    std::string z = model.is_torus() ? "" : format_full(cp.position.z());
    csv.row({std::to_string(cp.id), format_full(cp.position.x()), format_full(cp.position.y()), z,
             format_full(cp.f_value), std::to_string(cp.index_r), format_full(cp.lyapunov[0]),
             format_full(cp.lyapunov[1])});
  }
}

inline void write_resonances_csv(const std::string& path, const std::string& hash,
                                 const std::vector<ResonanceSet>& sets) {
  CsvWriter csv(path, hash, "degree,value,multiplicity,crit_id,J_bitmask,alpha_1,alpha_2");
  for (const auto& rs : sets) {
    for (const auto& e : rs.entries) {
      for (const auto& w : e.witnesses) {
        csv.row({std::to_string(rs.degree_k), format_full(e.value), std::to_string(e.multiplicity),
                 std::to_string(w.crit_id), std::to_string(w.J_mask), std::to_string(w.alpha[0]),
                 std::to_string(w.alpha[1])});
      }
    }
  }
}

// Sparse matrix in coordinate text format (row, col, value) for external
// audit of the assembled operators.
inline void export_matrix_coo(const std::string& path, const SparseMat& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  for (int col = 0; col < m.outerSize(); ++col)
    for (SparseMat::InnerIterator it(m, col); it; ++it)
      out << it.row() << " " << it.col() << " " << format_full(it.value()) << "\n";
}

}  // namespace wittenflow
