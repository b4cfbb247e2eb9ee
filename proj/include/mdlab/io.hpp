// SPDX-License-Identifier: Apache-2.0
//
// CSV and JSON artifacts, hashing and model checkpoints.

#pragma once

#include "mdlab/common.hpp"
#include "mdlab/concentration.hpp"
#include "mdlab/estimators.hpp"
#include "mdlab/fit.hpp"
#include "mdlab/samplers.hpp"

#include <json.hpp>

#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace mdlab::io {

using Json = nlohmann::ordered_json;

/// Shortest round-trip decimal form of x (17 significant digits).
std::string fmt(double x);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  void row(const std::vector<double>& cells);

 private:
  std::ofstream out_;
  std::size_t width_;
};

std::string read_file(const std::string& path);
void write_text(const std::string& path, std::string_view text);
void write_json(const std::string& path, const Json& j);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// weight,x0,...,x{D-1}
void write_measure_csv(const std::string& path, const FiniteMeasure& mu);
FiniteMeasure read_measure_csv(const std::string& path);

/// path,k,t_k,x0,...; one row per recorded node and path.
void write_trajectory_csv(const std::string& path, const samplers::SamplerResult& r,
                          const samplers::TimePartition& p);

/// chart,field,index,v0,...,v{D-1}; field is base, frame (index = column)
/// or coef (index = multi-index joined by ';').
void write_surface_csv(const std::string& path, const fit::PiecewiseSurface& s);

/// trial,statistic,excess,violation
void write_report_csv(const std::string& path, const concentration::BoundReport& r);
Json report_json(const concentration::BoundReport& r);

/// Versioned text bundle of a structured score with NetHead heads:
///   mdlab-checkpoint,1
///   params,<n>,<d>,<c_log>,<C_w>,<C_e>,<c_dim>,<diam_bound>,<t_lo>,<t_hi>,<rho_const>
///   anchor,<i>,<coords...>
///   frame,<i>,<rows>,<cols>,<column-major values...>
///   layer,<i>,<e|w>,<l>,<rows>,<cols>,<B>,<A column-major...>,<b...>
void save_checkpoint(const std::string& path, const estimators::StructuredScore& m);
estimators::StructuredScore load_checkpoint(const std::string& path);

}  // namespace mdlab::io
