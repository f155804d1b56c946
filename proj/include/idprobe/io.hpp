#pragma once

#include "idprobe/common.hpp"
#include "idprobe/point_cloud.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace idprobe {

// ---------------------------------------------------------------------------
// IDX binary format: 4-byte big-endian magic, big-endian 4-byte dimension
// sizes, raw unsigned bytes. Magic 0x00000803 for 3-D image tensors,
// 0x00000801 for 1-D label vectors.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& what) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in)
        throw DataFormatError("idx: truncated file while reading " + what);
    return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
           (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

inline void write_be_u32(std::ostream& out, std::uint32_t value) {
    const unsigned char bytes[4] = {
        (unsigned char)(value >> 24), (unsigned char)(value >> 16),
        (unsigned char)(value >> 8), (unsigned char)value};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

inline std::string hex_magic(std::uint32_t magic) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08x", magic);
    return buf;
}

}  // namespace detail

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Loads an IDX image tensor; rows are flattened row-major and pixels are
/// scaled to [0,1] by dividing by 255.
inline PointCloud load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("idx: cannot open " + path);
    const std::uint32_t magic = detail::read_be_u32(in, "magic");
    if (magic != kIdxImageMagic)
        throw DataFormatError("idx: expected image magic 0x00000803, got " +
                              detail::hex_magic(magic));
    const std::uint32_t count = detail::read_be_u32(in, "count");
    const std::uint32_t rows = detail::read_be_u32(in, "rows");
    const std::uint32_t cols = detail::read_be_u32(in, "cols");
    const std::uint64_t dim = std::uint64_t(rows) * cols;
    if (dim == 0) throw DataFormatError("idx: zero-sized image dimensions");
    std::vector<unsigned char> buffer(dim);
    PointCloud cloud;
    cloud.points.resize(Eigen::Index(count), Eigen::Index(dim));
    for (std::uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buffer.data()),
                std::streamsize(buffer.size()));
        if (!in)
            throw DataFormatError("idx: payload ends inside image " +
                                  std::to_string(i) + " of " +
                                  std::to_string(count));
        for (std::uint64_t j = 0; j < dim; ++j)
            cloud.points(Eigen::Index(i), Eigen::Index(j)) =
                double(buffer[j]) / 255.0;
    }
    return cloud;
}

inline std::vector<int> load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("idx: cannot open " + path);
    const std::uint32_t magic = detail::read_be_u32(in, "magic");
    if (magic != kIdxLabelMagic)
        throw DataFormatError("idx: expected label magic 0x00000801, got " +
                              detail::hex_magic(magic));
    const std::uint32_t count = detail::read_be_u32(in, "count");
    std::vector<unsigned char> buffer(count);
    in.read(reinterpret_cast<char*>(buffer.data()), std::streamsize(count));
    if (!in) throw DataFormatError("idx: label payload shorter than header count");
    return std::vector<int>(buffer.begin(), buffer.end());
}

/// Writes a 3-D unsigned-byte image tensor; pixels must already be bytes.
inline void save_idx_images(const std::string& path,
                            const std::vector<unsigned char>& pixels,
                            std::uint32_t count, std::uint32_t rows,
                            std::uint32_t cols) {
    if (pixels.size() != std::size_t(count) * rows * cols)
        throw UsageError("save_idx_images: payload size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("idx: cannot write " + path);
    detail::write_be_u32(out, kIdxImageMagic);
    detail::write_be_u32(out, count);
    detail::write_be_u32(out, rows);
    detail::write_be_u32(out, cols);
    out.write(reinterpret_cast<const char*>(pixels.data()),
              std::streamsize(pixels.size()));
}

inline void save_idx_labels(const std::string& path,
                            const std::vector<unsigned char>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("idx: cannot write " + path);
    detail::write_be_u32(out, kIdxLabelMagic);
    detail::write_be_u32(out, std::uint32_t(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()),
              std::streamsize(labels.size()));
}

// ---------------------------------------------------------------------------
// CSV: comma-separated numeric rows, optionally a final integer label column.
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_cell(const std::string& cell, int row, int col) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    while (end && *end == ' ') ++end;
    if (end == begin || (end && *end != '\0'))
        throw DataFormatError("csv: non-numeric cell at row " +
                              std::to_string(row + 1) + ", column " +
                              std::to_string(col + 1) + ": '" + cell + "'");
    return value;
}

}  // namespace detail

inline PointCloud load_csv(const std::string& path, bool last_column_labels = false) {
    std::ifstream in(path);
    if (!in) throw DataFormatError("csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int row_index = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            ++row_index;
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ','))
            row.push_back(detail::parse_cell(cell, row_index, col++));
        if (rows.empty()) {
            width = row.size();
        } else if (row.size() != width) {
            throw DataFormatError("csv: ragged row at row " +
                                  std::to_string(row_index + 1) + " (" +
                                  std::to_string(row.size()) + " fields, expected " +
                                  std::to_string(width) + ")");
        }
        rows.push_back(std::move(row));
        ++row_index;
    }
    if (rows.empty()) throw DataFormatError("csv: no data rows in " + path);
    const std::size_t dim = last_column_labels ? width - 1 : width;
    if (dim == 0)
        throw DataFormatError("csv: no coordinate columns left in " + path);
    PointCloud cloud;
    cloud.points.resize(Eigen::Index(rows.size()), Eigen::Index(dim));
    std::vector<int> labels;
    if (last_column_labels) labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < dim; ++j)
            cloud.points(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
        if (last_column_labels) {
            const double raw = rows[i][width - 1];
            const int label = int(raw);
            if (double(label) != raw || label < 0)
                throw DataFormatError("csv: label at row " + std::to_string(i + 1) +
                                      " is not a nonnegative integer");
            labels[i] = label;
        }
    }
    if (last_column_labels) cloud.labels = std::move(labels);
    return cloud;
}

inline void save_csv(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataFormatError("csv: cannot write " + path);
    char buf[40];
    for (int i = 0; i < cloud.size(); ++i) {
        for (int j = 0; j < cloud.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", cloud.points(i, j));
            if (j) out << ',';
            out << buf;
        }
        if (cloud.labels) out << ',' << (*cloud.labels)[std::size_t(i)];
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// JSON array-of-arrays form used in reports.
// ---------------------------------------------------------------------------

inline nlohmann::json cloud_to_json(const PointCloud& cloud) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < cloud.size(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < cloud.dim(); ++j) row.push_back(cloud.points(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline PointCloud cloud_from_json(const nlohmann::json& rows) {
    if (!rows.is_array()) throw DataFormatError("cloud json: expected array");
    PointCloud cloud;
    if (rows.empty()) return cloud;
    const std::size_t dim = rows[0].size();
    cloud.points.resize(Eigen::Index(rows.size()), Eigen::Index(dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != dim)
            throw DataFormatError("cloud json: ragged row " + std::to_string(i));
        for (std::size_t j = 0; j < dim; ++j)
            cloud.points(Eigen::Index(i), Eigen::Index(j)) = rows[i][j].get<double>();
    }
    return cloud;
}

}  // namespace idprobe
