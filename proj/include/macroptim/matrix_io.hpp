#pragma once

#include <string>

#include "macroptim/matrix.hpp"

namespace macroptim {

// Plain-text matrix format: first line "rows cols", then rows x cols
// whitespace-separated decimal reals. Values are written with 17 significant
// digits so files round-trip bit-exactly.
Matrix read_matrix_file(const std::string &path);
void write_matrix_file(const std::string &path, const Matrix &m);

Matrix parse_matrix_text(const std::string &text, const std::string &origin = "<string>");
std::string matrix_to_text(const Matrix &m);

} // namespace macroptim
