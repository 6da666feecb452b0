#pragma once

// Design matrix plus binary response, with CSV and compact binary storage.
//
// CSV: one header row, one row per observation, the last column is y in {0,1}.
// Binary: the 5-byte magic "HDLR1", u64 n, u64 p, then n*p little-endian f64
// values of X in row-major order, then n u8 values of y.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hdlogit/errors.hpp"

namespace hdlogit {

enum class DesignTag { gaussian, snp, external };

inline std::string to_string(DesignTag tag) {
  switch (tag) {
  case DesignTag::gaussian:
    return "gaussian";
  case DesignTag::snp:
    return "snp";
  case DesignTag::external:
    return "external";
  }
  return "external";
}

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  DesignTag design_tag = DesignTag::external;

  Dataset() = default;
  Dataset(Eigen::MatrixXd x, Eigen::VectorXd response, DesignTag tag = DesignTag::external)
      : X(std::move(x)), y(std::move(response)), design_tag(tag) {
    validate();
  }

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }

  void validate() const {
    if (X.rows() != y.size()) {
      throw InvalidArgument("Dataset: X has " + std::to_string(X.rows()) + " rows but y has " +
                            std::to_string(y.size()) + " entries");
    }
    if (!X.allFinite()) {
      throw InvalidArgument("Dataset: X contains non-finite values");
    }
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y[i] != 0.0 && y[i] != 1.0) {
        throw InvalidArgument("Dataset: y must be 0 or 1 (row " + std::to_string(i) + ")");
      }
    }
  }

  /// Copy keeping only the given columns, in order.
  Dataset select_columns(const std::vector<Eigen::Index>& cols) const {
    Eigen::MatrixXd sub(X.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      sub.col(static_cast<Eigen::Index>(k)) = X.col(cols[k]);
    }
    Dataset out;
    out.X = std::move(sub);
    out.y = y;
    out.design_tag = design_tag;
    return out;
  }
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) {
      break;
    }
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view tok, std::size_t line_no, std::size_t col) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) {
    tok.remove_prefix(1);
  }
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) {
    tok.remove_suffix(1);
  }
  const std::string s(tok);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ParseError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                     ": cannot parse '" + s + "' as a number");
  }
  return v;
}

} // namespace detail

inline Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("empty CSV input: expected a header row");
  }
  const std::size_t ncols = detail::split_csv(line).size();
  if (ncols < 2) {
    throw ParseError("CSV header must name at least one feature and the response");
  }
  std::vector<double> xs;
  std::vector<double> ys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") {
      continue;
    }
    const auto toks = detail::split_csv(line);
    if (toks.size() != ncols) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(ncols) + " fields, found " + std::to_string(toks.size()));
    }
    for (std::size_t c = 0; c + 1 < ncols; ++c) {
      xs.push_back(detail::parse_double(toks[c], line_no, c));
    }
    const double yv = detail::parse_double(toks[ncols - 1], line_no, ncols - 1);
    if (yv != 0.0 && yv != 1.0) {
      throw ParseError("line " + std::to_string(line_no) + ": response must be 0 or 1");
    }
    ys.push_back(yv);
  }
  if (ys.empty()) {
    throw ParseError("CSV contains a header but no observations");
  }
  const auto n = static_cast<Eigen::Index>(ys.size());
  const auto p = static_cast<Eigen::Index>(ncols - 1);
  Dataset d;
  d.X = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xs.data(), n, p);
  d.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  d.design_tag = DesignTag::external;
  try {
    d.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what());
  }
  return d;
}

inline void write_csv(std::ostream& out, const Dataset& d) {
  for (Eigen::Index j = 0; j < d.p(); ++j) {
    out << "x" << (j + 1) << ',';
  }
  out << "y\n";
  std::ostringstream row;
  row.precision(17);
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    row.str("");
    for (Eigen::Index j = 0; j < d.p(); ++j) {
      row << d.X(i, j) << ',';
    }
    row << static_cast<int>(d.y[i]) << '\n';
    out << row.str();
  }
}

inline constexpr std::string_view kBinaryMagic = "HDLR1";

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little,
                "binary dataset format assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) {
    throw ParseError("binary dataset truncated");
  }
  return v;
}

} // namespace detail

inline void write_binary(std::ostream& out, const Dataset& d) {
  out.write(kBinaryMagic.data(), static_cast<std::streamsize>(kBinaryMagic.size()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d.n()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d.p()));
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    for (Eigen::Index j = 0; j < d.p(); ++j) {
      detail::put_le<double>(out, d.X(i, j));
    }
  }
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(d.y[i]));
  }
}

inline Dataset read_binary(std::istream& in) {
  char magic[5] = {};
  in.read(magic, 5);
  if (!in || std::string_view(magic, 5) != kBinaryMagic) {
    throw ParseError("not an HDLR1 dataset (bad magic)");
  }
  const auto n = detail::get_le<std::uint64_t>(in);
  const auto p = detail::get_le<std::uint64_t>(in);
  if (n == 0 || p == 0 || n > (1ULL << 32) || p > (1ULL << 24)) {
    throw ParseError("HDLR1 header has implausible dimensions");
  }
  Dataset d;
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) {
      d.X(i, j) = detail::get_le<double>(in);
    }
  }
  d.y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    const auto v = detail::get_le<std::uint8_t>(in);
    if (v > 1) {
      throw ParseError("HDLR1 response byte must be 0 or 1");
    }
    d.y[i] = v;
  }
  try {
    d.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what());
  }
  return d;
}

/// Loads a dataset, choosing the format from the file's leading bytes.
inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open dataset '" + path + "'");
  }
  char head[5] = {};
  in.read(head, 5);
  const bool binary = in.gcount() == 5 && std::string_view(head, 5) == kBinaryMagic;
  in.clear();
  in.seekg(0);
  return binary ? read_binary(in) : read_csv(in);
}

inline void save_dataset(const std::string& path, const Dataset& d, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) {
    throw InvalidArgument("cannot write dataset '" + path + "'");
  }
  if (binary) {
    write_binary(out, d);
  } else {
    write_csv(out, d);
  }
}

} // namespace hdlogit
