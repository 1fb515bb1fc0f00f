#include "steinmf/io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace steinmf {

using nlohmann::json;

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

Matrix<double> load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw config_error("load_matrix_csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t pos = 0;
                const double v = std::stod(cell, &pos);
                while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos])))
                    ++pos;
                if (pos != cell.size())
                    throw std::invalid_argument(cell);
                row.push_back(v);
            } catch (const std::exception&) {
                throw config_error("load_matrix_csv: bad value '" + cell + "' in " + path);
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw config_error("load_matrix_csv: ragged rows in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw config_error("load_matrix_csv: empty file " + path);
    Matrix<double> m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

void save_matrix_csv(const std::string& path, const Matrix<double>& m) {
    std::ofstream out(path);
    if (!out)
        throw config_error("save_matrix_csv: cannot write " + path);
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j > 0)
                out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

Vector<double> load_vector_csv(const std::string& path) {
    const Matrix<double> m = load_matrix_csv(path);
    if (m.cols() == 1)
        return m.col(0);
    if (m.rows() == 1)
        return m.row(0).transpose();
    throw config_error("load_vector_csv: " + path + " is not a single row or column");
}

void save_vector_csv(const std::string& path, const Vector<double>& v) {
    save_matrix_csv(path, Matrix<double>(v));
}

Matrix<double> load_mask_csv(const std::string& path) {
    Matrix<double> mask = load_matrix_csv(path);
    validate_mask(mask);
    return mask;
}

namespace {

json matrix_to_row_major(const Matrix<double>& m) {
    json values = json::array();
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
            values.push_back(m(i, j));
    return values;
}

Matrix<double> matrix_from_row_major(const json& values, Index rows, Index cols,
                                     const std::string& what) {
    if (!values.is_array() || static_cast<Index>(values.size()) != rows * cols)
        throw config_error("load_transform_library: " + what + " has wrong length");
    Matrix<double> m(rows, cols);
    Index k = 0;
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            m(i, j) = values[static_cast<std::size_t>(k++)].get<double>();
    return m;
}

} // namespace

void save_transform_library(const std::string& path,
                            const std::vector<QTransformPair<double>>& library) {
    json entries = json::array();
    for (const auto& pair : library) {
        json entry;
        entry["r_svd"] = pair.r_svd();
        entry["r_t"] = pair.r_t();
        entry["q_a"] = matrix_to_row_major(pair.basis_map);
        entry["q_w"] = matrix_to_row_major(pair.weights_map);
        entry["seed"] = pair.seed;
        entry["restart"] = pair.restart;
        entries.push_back(std::move(entry));
    }
    std::ofstream out(path);
    if (!out)
        throw config_error("save_transform_library: cannot write " + path);
    out << entries.dump(2) << '\n';
}

std::vector<QTransformPair<double>> load_transform_library(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw config_error("load_transform_library: cannot open " + path);
    json entries;
    try {
        in >> entries;
    } catch (const json::exception& e) {
        throw config_error("load_transform_library: bad JSON in " + path + ": " + e.what());
    }
    if (!entries.is_array())
        throw config_error("load_transform_library: " + path + " must hold a JSON array");
    std::vector<QTransformPair<double>> library;
    library.reserve(entries.size());
    for (const auto& entry : entries) {
        try {
            const Index r_svd = entry.at("r_svd").get<Index>();
            const Index r_t = entry.at("r_t").get<Index>();
            if (r_svd < 1 || r_t < 1)
                throw config_error("load_transform_library: ranks must be >= 1");
            QTransformPair<double> pair;
            pair.basis_map = matrix_from_row_major(entry.at("q_a"), r_svd, r_t, "q_a");
            pair.weights_map = matrix_from_row_major(entry.at("q_w"), r_t, r_svd, "q_w");
            pair.seed = entry.value("seed", std::uint64_t(0));
            pair.restart = entry.value("restart", 0);
            if (!pair.basis_map.allFinite() || !pair.weights_map.allFinite())
                throw numeric_error("load_transform_library: non-finite transform entries");
            library.push_back(std::move(pair));
        } catch (const json::exception& e) {
            throw config_error("load_transform_library: bad entry in " + path + ": " + e.what());
        }
    }
    if (library.empty())
        throw config_error("load_transform_library: " + path + " holds no pairs");
    return library;
}

} // namespace steinmf
