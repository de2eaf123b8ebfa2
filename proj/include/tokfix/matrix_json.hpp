#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace tokfix {

/// Matrices as nested arrays of rows. Doubles survive a dump/parse round trip
/// bit-exactly.
nlohmann::json matrix_json(const Eigen::MatrixXd& m);
/// Throws schema-error naming `name` for non-rectangular input.
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* name);
nlohmann::json vector_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

}  // namespace tokfix
