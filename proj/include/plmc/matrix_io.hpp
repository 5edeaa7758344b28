#pragma once

#include "plmc/linalg.hpp"

#include <iosfwd>
#include <string>

namespace plmc {

// Text matrix files: a "rows cols" header line, then one line per row with
// values printed to 17 significant digits, so doubles round-trip exactly.

void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in, const std::string& source = "stream");

void save_matrix(const std::string& path, const Matrix& m);
Matrix load_matrix(const std::string& path);

}  // namespace plmc
