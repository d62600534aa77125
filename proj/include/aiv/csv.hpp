#pragma once

#include <string>
#include <vector>

#include "aiv/core.hpp"

namespace aiv {

// Comma-delimited numeric matrix, headerless or with a single header line
// (detected: any cell of the first line that does not parse as a number).
// Parse failures report the 1-based row and column.
MatrixXd read_csv_matrix(const std::string& path);
VectorXd read_csv_vector(const std::string& path);

// Values serialized with 17 significant digits so a round-trip is exact.
void write_csv_matrix(const std::string& path, const MatrixXd& m,
                      const std::vector<std::string>& header = {});

std::string format_full(double v);

}  // namespace aiv
