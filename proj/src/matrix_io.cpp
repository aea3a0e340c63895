#include "topicseg/matrix_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace topicseg {

namespace {
constexpr char kMagic[8] = {'T', 'S', 'K', 'E', 'M', 'B', '1', '\0'};

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
           (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}
}  // namespace

void save_matrix(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write(kMagic, 8);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    std::vector<double> row(static_cast<size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<size_t>(j)] = m(i, j);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Eigen::MatrixXd load_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("bad embedding file magic: " + path);
    }
    std::uint32_t rows = get_u32(in);
    std::uint32_t cols = get_u32(in);
    if (!in) throw std::runtime_error("truncated embedding header: " + path);
    Eigen::MatrixXd m(rows, cols);
    std::vector<double> row(cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(cols * sizeof(double)));
        if (!in) throw std::runtime_error("truncated embedding payload: " + path);
        for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = row[j];
    }
    return m;
}

}  // namespace topicseg
