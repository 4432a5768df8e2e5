#ifndef HFNN_COMMON_HPP
#define HFNN_COMMON_HPP

#include <Eigen/Dense>

#include <charconv>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace hfnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameterError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TranscriptError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double value) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ParseError("not a finite decimal number: '" + std::string(text) + "'");
  }
  return value;
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidParameterError(message);
}

inline void require_shape(bool condition, const std::string& message) {
  if (!condition) throw ShapeError(message);
}

}  // namespace hfnn

#endif
