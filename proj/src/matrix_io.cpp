#include "macroptim/matrix_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace macroptim {

Matrix parse_matrix_text(const std::string &text, const std::string &origin) {
    std::istringstream in(text);
    long long rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows < 1 || cols < 1) {
        throw std::invalid_argument(origin + ": expected header 'rows cols'");
    }
    if (rows > 100000 || cols > 100000) {
        throw std::invalid_argument(origin + ": implausible dimensions");
    }
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(rows * cols));
    double v = 0.0;
    while (static_cast<long long>(data.size()) < rows * cols && (in >> v)) data.push_back(v);
    if (static_cast<long long>(data.size()) != rows * cols) {
        throw std::invalid_argument(origin + ": expected " + std::to_string(rows * cols) +
                                    " entries, got " + std::to_string(data.size()));
    }
    std::string trailing;
    if (in >> trailing) {
        throw std::invalid_argument(origin + ": trailing content '" + trailing + "'");
    }
    return Matrix(static_cast<int>(rows), static_cast<int>(cols), std::move(data));
}

Matrix read_matrix_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open matrix file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_matrix_text(ss.str(), path);
}

std::string matrix_to_text(const Matrix &m) {
    std::string out = std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    char buf[40];
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            out += buf;
            out += (j + 1 == m.cols()) ? "\n" : " ";
        }
    }
    return out;
}

void write_matrix_file(const std::string &path, const Matrix &m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write matrix file '" + path + "'");
    out << matrix_to_text(m);
}

} // namespace macroptim
