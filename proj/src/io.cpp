// SPDX-License-Identifier: Apache-2.0

#include "mdlab/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace mdlab::io {

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path), width_(header.size()) {
  if (!out_) throw Error("cannot open '" + path + "' for writing");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw Error("csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& cells) {
  std::vector<std::string> s;
  s.reserve(cells.size());
  for (double x : cells) s.push_back(fmt(x));
  row(s);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
}

void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double num(const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw Error("");
    return v;
  } catch (...) {
    throw Error("not a number: '" + s + "'");
  }
}

std::vector<std::string> coord_header(std::vector<std::string> head, Eigen::Index D) {
  for (Eigen::Index j = 0; j < D; ++j) head.push_back("x" + std::to_string(j));
  return head;
}

}  // namespace

void write_measure_csv(const std::string& path, const FiniteMeasure& mu) {
  CsvWriter w(path, coord_header({"weight"}, mu.dim()));
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    std::vector<double> r{mu.weights[i]};
    for (Eigen::Index j = 0; j < mu.dim(); ++j) r.push_back(mu.support(i, j));
    w.row(r);
  }
}

FiniteMeasure read_measure_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw Error("measure csv: empty file");
  auto head = split(line);
  if (head.size() < 2 || head[0] != "weight") throw Error("measure csv: header must start with 'weight'");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != head.size()) throw Error("measure csv: ragged row " + std::to_string(rows.size() + 1));
    std::vector<double> r;
    for (auto& c : cells) r.push_back(num(c));
    rows.push_back(std::move(r));
  }
  FiniteMeasure mu;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto D = static_cast<Eigen::Index>(head.size() - 1);
  mu.support.resize(n, D);
  mu.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    mu.weights[i] = rows[static_cast<std::size_t>(i)][0];
    for (Eigen::Index j = 0; j < D; ++j) mu.support(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j + 1)];
  }
  mu.validate();
  return mu;
}

void write_trajectory_csv(const std::string& path, const samplers::SamplerResult& r,
                          const samplers::TimePartition& p) {
  if (r.trajectory.empty()) throw Error("trajectory csv: run was not recorded");
  const Eigen::Index D = r.trajectory[0].cols();
  CsvWriter w(path, coord_header({"path", "k", "t_k"}, D));
  for (Eigen::Index i = 0; i < r.trajectory[0].rows(); ++i)
    for (std::size_t k = 0; k < r.trajectory.size(); ++k) {
      std::vector<double> row{static_cast<double>(i), static_cast<double>(k), p.t[k]};
      for (Eigen::Index j = 0; j < D; ++j) row.push_back(r.trajectory[k](i, j));
      w.row(row);
    }
}

void write_surface_csv(const std::string& path, const fit::PiecewiseSurface& s) {
  if (s.charts.empty()) throw Error("surface csv: no charts");
  const Eigen::Index D = s.charts[0].base.size();
  CsvWriter w(path, coord_header({"chart", "field", "index"}, D));
  auto put = [&](std::size_t c, const std::string& field, const std::string& idx, const Vec& v) {
    std::vector<std::string> row{std::to_string(c), field, idx};
    for (Eigen::Index j = 0; j < D; ++j) row.push_back(fmt(v[j]));
    w.row(row);
  };
  for (std::size_t c = 0; c < s.charts.size(); ++c) {
    const auto& ch = s.charts[c];
    put(c, "base", "0", ch.base);
    for (Eigen::Index j = 0; j < ch.P.cols(); ++j) put(c, "frame", std::to_string(j), ch.P.col(j));
    for (std::size_t k = 0; k < ch.S.size(); ++k) {
      std::string idx;
      for (std::size_t q = 0; q < ch.S.items[k].size(); ++q) idx += (q ? ";" : "") + std::to_string(ch.S.items[k][q]);
      put(c, "coef", idx, ch.coeffs.col(static_cast<Eigen::Index>(k)));
    }
  }
}

void write_report_csv(const std::string& path, const concentration::BoundReport& r) {
  CsvWriter w(path, {"trial", "statistic", "excess", "violation"});
  for (std::size_t i = 0; i < r.statistic.size(); ++i)
    w.row({std::to_string(i), fmt(r.statistic[i]), fmt(r.excess[i]), r.excess[i] > 0 ? "1" : "0"});
}

Json report_json(const concentration::BoundReport& r) {
  Json j;
  j["name"] = r.name;
  j["config"] = Json::object();
  for (auto& [k, v] : r.config) j["config"][k] = v;
  j["bound"] = r.bound;
  j["delta"] = r.delta;
  j["trials"] = r.trials;
  j["violations"] = r.violations;
  j["violation_rate"] = r.violation_rate;
  j["binomial_se"] = r.binomial_se();
  j["within_delta"] = r.within_delta();
  j["quantiles"] = {{"q05", r.q05}, {"q50", r.q50}, {"q95", r.q95}};
  j["extra"] = Json::object();
  for (auto& [k, v] : r.extra) j["extra"][k] = std::isfinite(v) ? Json(v) : Json(fmt(v));
  return j;
}

namespace {

void put_matrix(std::ostream& out, const Mat& A) {
  out << ',' << A.rows() << ',' << A.cols();
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i) out << ',' << fmt(A(i, j));
}

void put_net(std::ostream& out, std::size_t head, const char* tag, const estimators::ReluNet& net) {
  for (int l = 0; l < net.depth(); ++l) {
    out << "layer," << head << ',' << tag << ',' << l;
    const auto& A = net.A[static_cast<std::size_t>(l)];
    const auto& b = net.b[static_cast<std::size_t>(l)];
    out << ',' << A.rows() << ',' << A.cols() << ',' << fmt(net.B);
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      for (Eigen::Index i = 0; i < A.rows(); ++i) out << ',' << fmt(A(i, j));
    for (Eigen::Index i = 0; i < b.size(); ++i) out << ',' << fmt(b[i]);
    out << '\n';
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const estimators::StructuredScore& m) {
  m.validate();
  std::ostringstream out;
  const auto& p = m.params;
  out << "mdlab-checkpoint,1\n";
  out << "params," << p.n << ',' << p.d << ',' << fmt(p.c_log) << ',' << fmt(p.C_w) << ',' << fmt(p.C_e) << ','
      << fmt(p.c_dim) << ',' << fmt(p.diam_bound) << ',' << fmt(p.t_lo) << ',' << fmt(p.t_hi) << ','
      << fmt(p.rho_const) << '\n';
  for (Eigen::Index i = 0; i < m.anchors.rows(); ++i) {
    out << "anchor," << i;
    for (Eigen::Index j = 0; j < m.anchors.cols(); ++j) out << ',' << fmt(m.anchors(i, j));
    out << '\n';
  }
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    out << "frame," << i;
    put_matrix(out, m.frames[i]);
    out << '\n';
  }
  for (std::size_t i = 0; i < m.heads.size(); ++i) {
    auto* h = dynamic_cast<const estimators::NetHead*>(m.heads[i].get());
    if (!h) throw Error("save_checkpoint: head " + std::to_string(i) + " is not a network head");
    put_net(out, i, "e", h->e_net);
    put_net(out, i, "w", h->w_net);
  }
  write_text(path, out.str());
}

estimators::StructuredScore load_checkpoint(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "mdlab-checkpoint,1") throw Error("checkpoint: missing or unsupported header");
  estimators::StructuredScore m;
  std::vector<std::vector<double>> anchors;
  std::map<std::size_t, estimators::NetHead> heads;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto c = split(line);
    const std::string where = "checkpoint line " + std::to_string(lineno);
    std::size_t pos = 1;
    auto next = [&]() {
      if (pos >= c.size()) throw Error(where + ": truncated record");
      return num(c[pos++]);
    };
    auto read_mat = [&](Eigen::Index r, Eigen::Index k) {
      Mat A(r, k);
      for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = 0; i < r; ++i) A(i, j) = next();
      return A;
    };
    if (c[0] == "params") {
      auto& p = m.params;
      p.n = static_cast<long>(next());
      p.d = static_cast<int>(next());
      p.c_log = next();
      p.C_w = next();
      p.C_e = next();
      p.c_dim = next();
      p.diam_bound = next();
      p.t_lo = next();
      p.t_hi = next();
      p.rho_const = next();
    } else if (c[0] == "anchor") {
      next();
      std::vector<double> v;
      while (pos < c.size()) v.push_back(next());
      anchors.push_back(std::move(v));
    } else if (c[0] == "frame") {
      next();
      auto r = static_cast<Eigen::Index>(next());
      auto k = static_cast<Eigen::Index>(next());
      m.frames.push_back(read_mat(r, k));
    } else if (c[0] == "layer") {
      auto i = static_cast<std::size_t>(next());
      if (pos >= c.size()) throw Error(where + ": truncated record");
      const std::string tag = c[pos++];
      if (tag != "e" && tag != "w") throw Error(where + ": unknown layer tag '" + tag + "'");
      next();
      auto r = static_cast<Eigen::Index>(next());
      auto k = static_cast<Eigen::Index>(next());
      double B = next();
      Mat A = read_mat(r, k);
      Vec b(r);
      for (Eigen::Index q = 0; q < r; ++q) b[q] = next();
      auto& net = tag == "e" ? heads[i].e_net : heads[i].w_net;
      if (!net.A.empty() && net.B != B) throw Error(where + ": layers of one net disagree on B");
      net.A.push_back(std::move(A));
      net.b.push_back(std::move(b));
      net.B = B;
    } else {
      throw Error(where + ": unknown record '" + c[0] + "'");
    }
    if (pos != c.size()) throw Error(where + ": trailing fields");
  }
  if (anchors.empty()) throw Error("checkpoint: no anchors");
  m.anchors.resize(static_cast<Eigen::Index>(anchors.size()), static_cast<Eigen::Index>(anchors[0].size()));
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (anchors[i].size() != anchors[0].size()) throw Error("checkpoint: ragged anchors");
    for (std::size_t j = 0; j < anchors[i].size(); ++j)
      m.anchors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = anchors[i][j];
  }
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    auto it = heads.find(i);
    if (it == heads.end()) throw Error("checkpoint: missing head " + std::to_string(i));
    if (!it->second.e_net.within_bound() || !it->second.w_net.within_bound())
      throw Error("checkpoint: head " + std::to_string(i) + " has entries above its bound B");
    m.heads.push_back(std::make_unique<estimators::NetHead>(it->second));
  }
  m.validate();
  return m;
}

}  // namespace mdlab::io
