#ifndef HFNN_JSON_UTIL_HPP
#define HFNN_JSON_UTIL_HPP

#include <json.hpp>

#include "hfnn/common.hpp"

namespace hfnn {

using Json = nlohmann::json;

namespace jsonutil {

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw ParseError("expected an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j[0].size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw ParseError("ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Vector vector_from_json(const Json& j) {
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

inline Json ints_to_json(const IntVector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline IntVector ints_from_json(const Json& j) {
  IntVector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<int>();
  return v;
}

}  // namespace jsonutil
}  // namespace hfnn

#endif
