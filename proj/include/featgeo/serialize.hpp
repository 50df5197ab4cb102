#pragma once

#include <string>

#include "json.hpp"
#include "featgeo/geometry.hpp"
#include "featgeo/oracle.hpp"

namespace featgeo {

nlohmann::json to_json(const ProbTable& p);
ProbTable prob_table_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModalDecomposition& d);
ModalDecomposition decomposition_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace featgeo
