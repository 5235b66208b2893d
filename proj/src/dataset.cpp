#include "fusion/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fusion {

const Eigen::VectorXd& AssignmentProbs::for_stratum(int stratum) const {
  if (per_stratum.empty()) return marginal;
  if (stratum < 0 || stratum >= static_cast<int>(per_stratum.size())) {
    throw DataError("AssignmentProbs: stratum id out of range");
  }
  return per_stratum[static_cast<std::size_t>(stratum)];
}

void AssignmentProbs::validate() const {
  auto check = [](const Eigen::VectorXd& p) {
    if (p.size() < 2) throw DataError("AssignmentProbs: need at least two arms");
    double total = 0.0;
    for (long k = 0; k < p.size(); ++k) {
      if (!(p[k] > 0.0 && p[k] < 1.0)) {
        throw DataError("AssignmentProbs: probabilities must lie strictly inside (0,1)");
      }
      total += p[k];
    }
    if (std::abs(total - 1.0) > 1e-9) throw DataError("AssignmentProbs: probabilities must sum to 1");
  };
  check(marginal);
  for (const auto& p : per_stratum) {
    if (p.size() != marginal.size()) throw DataError("AssignmentProbs: stratum arm count mismatch");
    check(p);
  }
}

std::vector<int> Dataset::rows_of(Source s) const {
  std::vector<int> rows;
  for (long i = 0; i < n(); ++i) {
    if (source[static_cast<std::size_t>(i)] == s) rows.push_back(static_cast<int>(i));
  }
  return rows;
}

const Eigen::VectorXd& Dataset::probs_for_row(int row) const {
  if (strata.empty()) return probs.marginal;
  return probs.for_stratum(strata[static_cast<std::size_t>(row)]);
}

void Dataset::validate() const {
  const long rows = n();
  if (rows == 0) throw DataError("Dataset: empty");
  if (static_cast<long>(t.size()) != rows || y.size() != rows ||
      static_cast<long>(source.size()) != rows) {
    throw DataError("Dataset: column length mismatch");
  }
  probs.validate();
  for (long i = 0; i < rows; ++i) {
    const int arm = t[static_cast<std::size_t>(i)];
    if (arm < 0 || arm >= arms()) throw DataError("Dataset: arm id out of range");
  }
  if (!strata.empty() && static_cast<long>(strata.size()) != rows) {
    throw DataError("Dataset: strata length mismatch");
  }
  if (tau_true.size() != 0 && tau_true.size() != rows) throw DataError("Dataset: tau_true length mismatch");
  if (z_latent.size() != 0 && z_latent.rows() != rows) throw DataError("Dataset: z_latent length mismatch");
  if (u_latent.size() != 0 && u_latent.size() != rows) throw DataError("Dataset: u_latent length mismatch");
  if (!s_region.empty() && static_cast<long>(s_region.size()) != rows) {
    throw DataError("Dataset: s_region length mismatch");
  }
}

Eigen::MatrixXd Dataset::x_rows(std::span<const int> rows) const {
  Eigen::MatrixXd out(static_cast<long>(rows.size()), dim());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<long>(i)) = x.row(rows[i]);
  return out;
}

std::vector<int> Dataset::t_rows(std::span<const int> rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = t[static_cast<std::size_t>(rows[i])];
  return out;
}

Eigen::VectorXd Dataset::y_rows(std::span<const int> rows) const {
  Eigen::VectorXd out(static_cast<long>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<long>(i)] = y[rows[i]];
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_dataset_csv(const Dataset& d, const std::string& path) {
  d.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  const int dim = d.dim();
  const int arms = d.arms();
  const bool has_region = !d.s_region.empty();

  for (int j = 0; j < dim; ++j) out << "x_" << j << ",";
  out << "t,y,source,";
  for (int k = 0; k < arms; ++k) out << "p_" << k << ",";
  out << "tau_true,z_0,z_1,u";
  if (has_region) out << ",s_region";
  out << "\n";

  for (long i = 0; i < d.n(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    for (int j = 0; j < dim; ++j) out << format_double(d.x(i, j)) << ",";
    out << d.t[idx] << "," << format_double(d.y[i]) << ","
        << (d.source[idx] == Source::kRct ? "rct" : "obs") << ",";
    if (d.source[idx] == Source::kRct) {
      const Eigen::VectorXd& p = d.probs_for_row(static_cast<int>(i));
      for (int k = 0; k < arms; ++k) out << format_double(p[k]) << ",";
    } else {
      for (int k = 0; k < arms; ++k) out << ",";
    }
    if (d.tau_true.size() != 0) out << format_double(d.tau_true[i]);
    out << ",";
    if (d.z_latent.size() != 0) {
      out << format_double(d.z_latent(i, 0)) << "," << format_double(d.z_latent(i, 1));
    } else {
      out << ",";
    }
    out << ",";
    if (d.u_latent.size() != 0) out << format_double(d.u_latent[i]);
    if (has_region) out << "," << static_cast<int>(d.s_region[idx]);
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("bad numeric field '" + s + "' in " + what);
  }
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset file: " + path);
  const auto header = split_csv_line(line);

  int dim = 0;
  while (dim < static_cast<int>(header.size()) && header[static_cast<std::size_t>(dim)] == "x_" + std::to_string(dim)) {
    ++dim;
  }
  if (dim == 0) throw DataError("dataset header must start with x_0: " + path);
  auto expect = [&](std::size_t pos, const std::string& name) {
    if (pos >= header.size() || header[pos] != name) {
      throw DataError("dataset header missing column " + name + ": " + path);
    }
  };
  std::size_t pos = static_cast<std::size_t>(dim);
  expect(pos++, "t");
  expect(pos++, "y");
  expect(pos++, "source");
  int arms = 0;
  while (pos < header.size() && header[pos] == "p_" + std::to_string(arms)) {
    ++pos;
    ++arms;
  }
  if (arms < 2) throw DataError("dataset header needs p_0..p_K columns: " + path);
  expect(pos++, "tau_true");
  expect(pos++, "z_0");
  expect(pos++, "z_1");
  expect(pos++, "u");
  const bool has_region = pos < header.size() && header[pos] == "s_region";

  std::vector<std::vector<std::string>> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) throw DataError("ragged csv row in " + path);
    records.push_back(std::move(fields));
  }
  const long n = static_cast<long>(records.size());
  if (n == 0) throw DataError("dataset has no rows: " + path);

  Dataset d;
  d.x.resize(n, dim);
  d.t.resize(static_cast<std::size_t>(n));
  d.y.resize(n);
  d.source.resize(static_cast<std::size_t>(n));
  bool any_tau = false, any_z = false, any_u = false;
  Eigen::VectorXd tau(n), u(n);
  Eigen::MatrixXd z(n, 2);
  if (has_region) d.s_region.resize(static_cast<std::size_t>(n));
  Eigen::VectorXd marginal;

  for (long i = 0; i < n; ++i) {
    const auto& f = records[static_cast<std::size_t>(i)];
    std::size_t c = 0;
    for (int j = 0; j < dim; ++j) d.x(i, j) = parse_double(f[c++], path);
    d.t[static_cast<std::size_t>(i)] = static_cast<int>(parse_double(f[c++], path));
    d.y[i] = parse_double(f[c++], path);
    const std::string& src = f[c++];
    if (src == "rct") {
      d.source[static_cast<std::size_t>(i)] = Source::kRct;
    } else if (src == "obs") {
      d.source[static_cast<std::size_t>(i)] = Source::kObs;
    } else {
      throw DataError("bad source value '" + src + "' in " + path);
    }
    Eigen::VectorXd p(arms);
    bool has_p = true;
    for (int k = 0; k < arms; ++k) {
      const std::string& cell = f[c++];
      if (cell.empty()) {
        has_p = false;
      } else {
        p[k] = parse_double(cell, path);
      }
    }
    if (d.source[static_cast<std::size_t>(i)] == Source::kRct) {
      if (!has_p) throw DataError("RCT row without assignment probabilities in " + path);
      if (marginal.size() == 0) {
        marginal = p;
      } else if ((marginal - p).lpNorm<Eigen::Infinity>() > 0.0) {
        throw DataError("per-row probabilities differ; stratified designs are not representable in csv: " + path);
      }
    }
    const std::string& tau_s = f[c++];
    if (!tau_s.empty()) {
      tau[i] = parse_double(tau_s, path);
      any_tau = true;
    } else {
      tau[i] = std::nan("");
    }
    const std::string& z0 = f[c++];
    const std::string& z1 = f[c++];
    if (!z0.empty() && !z1.empty()) {
      z(i, 0) = parse_double(z0, path);
      z(i, 1) = parse_double(z1, path);
      any_z = true;
    } else {
      z(i, 0) = z(i, 1) = std::nan("");
    }
    const std::string& us = f[c++];
    if (!us.empty()) {
      u[i] = parse_double(us, path);
      any_u = true;
    } else {
      u[i] = std::nan("");
    }
    if (has_region) d.s_region[static_cast<std::size_t>(i)] = f[c++] == "1" ? 1 : 0;
  }
  if (marginal.size() == 0) throw DataError("dataset has no RCT rows: " + path);
  d.probs.marginal = marginal;
  if (any_tau) d.tau_true = tau;
  if (any_z) d.z_latent = z;
  if (any_u) d.u_latent = u;
  d.validate();
  return d;
}

}  // namespace fusion
