#pragma once

#include "steinmf/qtransform.hpp"
#include "steinmf/types.hpp"

#include <string>
#include <vector>

namespace steinmf {

/// Headerless CSV, rows = matrix rows, values written with 17 significant
/// digits so doubles round-trip exactly.
Matrix<double> load_matrix_csv(const std::string& path);
void save_matrix_csv(const std::string& path, const Matrix<double>& m);

/// One value per line.
Vector<double> load_vector_csv(const std::string& path);
void save_vector_csv(const std::string& path, const Vector<double>& v);

/// Loads a {0,1} mask and checks the coverage invariants.
Matrix<double> load_mask_csv(const std::string& path);

/// Transform library file: a JSON array of
/// {r_svd, r_t, q_a: row-major, q_w: row-major, seed, restart} objects.
void save_transform_library(const std::string& path,
                            const std::vector<QTransformPair<double>>& library);
std::vector<QTransformPair<double>> load_transform_library(const std::string& path);

std::string format_double(double value);

} // namespace steinmf
