#include "featgeo/serialize.hpp"

#include <fstream>

namespace featgeo {

namespace {

Eigen::VectorXd vector_from(const nlohmann::json& j) {
  if (!j.is_array()) throw ShapeError("expected a numeric list");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ShapeError("expected a numeric list");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

nlohmann::json list_of(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json columns_of(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(list_of(m.col(c)));
  return out;
}

Eigen::MatrixXd matrix_from_columns(const nlohmann::json& j, Eigen::Index rows) {
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(j.size()));
  for (std::size_t c = 0; c < j.size(); ++c) {
    const Eigen::VectorXd col = vector_from(j[c]);
    if (col.size() != rows) throw ShapeError("feature length mismatch");
    m.col(static_cast<Eigen::Index>(c)) = col;
  }
  return m;
}

}  // namespace

nlohmann::json to_json(const ProbTable& p) {
  return {{"shape", p.shape()}, {"mass", list_of(p.mass())}};
}

ProbTable prob_table_from_json(const nlohmann::json& j) {
  if (!j.contains("shape") || !j.contains("mass")) throw ShapeError("table JSON needs shape and mass");
  return ProbTable(j.at("shape").get<Shape>(), vector_from(j.at("mass")));
}

nlohmann::json to_json(const ModalDecomposition& d) {
  return {{"sigmas", list_of(d.sigmas)},
          {"f", columns_of(d.left)},
          {"g", columns_of(d.right)},
          {"metric_x", list_of(d.metric_x)},
          {"metric_y", list_of(d.metric_y)},
          {"x_shape", d.x_shape},
          {"y_shape", d.y_shape}};
}

ModalDecomposition decomposition_from_json(const nlohmann::json& j) {
  ModalDecomposition d;
  d.sigmas = vector_from(j.at("sigmas"));
  d.metric_x = vector_from(j.at("metric_x"));
  d.metric_y = vector_from(j.at("metric_y"));
  d.left = matrix_from_columns(j.at("f"), d.metric_x.size());
  d.right = matrix_from_columns(j.at("g"), d.metric_y.size());
  d.x_shape = j.at("x_shape").get<Shape>();
  d.y_shape = j.at("y_shape").get<Shape>();
  if (d.left.cols() != d.sigmas.size() || d.right.cols() != d.sigmas.size())
    throw ShapeError("decomposition feature count differs from sigma count");
  return d;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ShapeError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace featgeo
