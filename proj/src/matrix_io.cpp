#include "plmc/matrix_io.hpp"

#include "plmc/errors.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace plmc {

void write_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      if (j > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

Matrix read_matrix(std::istream& in, const std::string& source) {
  std::string header;
  if (!std::getline(in, header)) throw InvalidInput(source + ": missing matrix header");
  std::istringstream hs(header);
  long long rows = -1, cols = -1;
  std::string extra;
  if (!(hs >> rows >> cols) || (hs >> extra) || rows < 0 || cols < 0) {
    throw InvalidInput(source + ": malformed header '" + header + "' (expected 'rows cols')");
  }
  Matrix m(rows, cols);
  std::string token;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(in >> token)) throw InvalidInput(source + ": too few values for a " + header + " matrix");
      char* end = nullptr;
      m(i, j) = std::strtod(token.c_str(), &end);
      if (end != token.c_str() + token.size()) throw InvalidInput(source + ": bad value '" + token + "'");
    }
  }
  if (in >> token) throw InvalidInput(source + ": trailing data after matrix");
  return m;
}

void save_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  write_matrix(out, m);
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

Matrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  return read_matrix(in, path);
}

}  // namespace plmc
