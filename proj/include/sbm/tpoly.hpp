#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <string>
#include <vector>

namespace sbm {

using BigInt = boost::multiprecision::cpp_int;

/// Dense polynomial in a single symbol with exact integer coefficients.
/// Index k holds the coefficient of t^k.
class TPoly {
 public:
  TPoly() = default;
  explicit TPoly(std::vector<BigInt> coeffs) : c_(std::move(coeffs)) { trim(); }

  static TPoly constant(long v) { return TPoly({BigInt(v)}); }
  static TPoly monomial(int power, BigInt coeff = BigInt(1)) {
    std::vector<BigInt> c(power + 1);
    c[power] = std::move(coeff);
    return TPoly(std::move(c));
  }

  int degree() const { return static_cast<int>(c_.size()) - 1; }
  bool is_zero() const { return c_.empty(); }

  BigInt coeff(int k) const {
    if (k < 0 || k >= static_cast<int>(c_.size())) return BigInt(0);
    return c_[k];
  }

  TPoly& operator+=(const TPoly& o) {
    if (o.c_.size() > c_.size()) c_.resize(o.c_.size());
    for (std::size_t k = 0; k < o.c_.size(); ++k) c_[k] += o.c_[k];
    trim();
    return *this;
  }

  friend TPoly operator+(TPoly a, const TPoly& b) {
    a += b;
    return a;
  }

  friend TPoly operator*(const TPoly& a, const TPoly& b) {
    if (a.is_zero() || b.is_zero()) return TPoly();
    std::vector<BigInt> c(a.c_.size() + b.c_.size() - 1);
    for (std::size_t i = 0; i < a.c_.size(); ++i) {
      if (a.c_[i] == 0) continue;
      for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
    }
    return TPoly(std::move(c));
  }

  TPoly& operator*=(const BigInt& s) {
    for (auto& x : c_) x *= s;
    trim();
    return *this;
  }

  bool operator==(const TPoly& o) const { return c_ == o.c_; }

  double evaluate(double t) const {
    double acc = 0.0;
    for (std::size_t k = c_.size(); k-- > 0;) acc = acc * t + c_[k].convert_to<double>();
    return acc;
  }

  /// Rendering like "14t^4 + 28t^3 + 12t^2 + t".
  std::string str(const std::string& symbol = "t") const {
    if (c_.empty()) return "0";
    std::string out;
    for (int k = degree(); k >= 0; --k) {
      if (c_[k] == 0) continue;
      if (!out.empty()) out += " + ";
      const bool unit = (c_[k] == 1) && k > 0;
      if (!unit) out += c_[k].str();
      if (k > 0) out += symbol;
      if (k > 1) out += "^" + std::to_string(k);
    }
    return out.empty() ? "0" : out;
  }

  const std::vector<BigInt>& coefficients() const { return c_; }

 private:
  void trim() {
    while (!c_.empty() && c_.back() == 0) c_.pop_back();
  }

  std::vector<BigInt> c_;
};

}  // namespace sbm
