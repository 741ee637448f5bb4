#include "scdiff/tensor.hpp"

#include <sstream>

namespace scdiff {

std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); i++) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw std::invalid_argument("dot: size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); i++) s += a.data[i] * b.data[i];
  return s;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

Tensor axpy(double alpha, const Tensor& x, const Tensor& y) {
  if (x.numel() != y.numel()) throw std::invalid_argument("axpy: size mismatch");
  Tensor out = y;
  for (std::size_t i = 0; i < x.numel(); i++) out.data[i] += alpha * x.data[i];
  return out;
}

}  // namespace scdiff
