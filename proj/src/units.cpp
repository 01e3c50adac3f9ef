#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <utility>
#include <vector>

#include "ocscale/scaling.hpp"

namespace ocscale {
namespace {

// coefficient * product of symbol^power, symbols kept in first-seen order.
struct Monomial {
  double coef = 1.0;
  std::vector<std::pair<std::string, int>> powers;

  void multiply(const Monomial& o, int sign) {
    coef = sign > 0 ? coef * o.coef : coef / o.coef;
    for (const auto& [sym, k] : o.powers) {
      auto it = std::find_if(powers.begin(), powers.end(), [&](const auto& e) { return e.first == sym; });
      if (it == powers.end()) {
        powers.emplace_back(sym, sign * k);
      } else {
        it->second += sign * k;
      }
    }
  }

  void raise(int n) {
    coef = std::pow(coef, n);
    for (auto& e : powers) e.second *= n;
  }
};

class UnitParser {
 public:
  explicit UnitParser(const std::string& s) : s_(s) {}

  std::optional<Monomial> run() {
    auto m = product();
    skip();
    if (!m || pos_ != s_.size()) return std::nullopt;
    return m;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && s_[pos_] == ' ') ++pos_;
  }

  bool starts_atom() {
    skip();
    if (pos_ >= s_.size()) return false;
    const char c = s_[pos_];
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '(' || c == '.';
  }

  // product := power (('*' | '/' | juxtaposition) power)*
  std::optional<Monomial> product() {
    auto m = power();
    if (!m) return std::nullopt;
    for (;;) {
      skip();
      int sign = 1;
      if (pos_ < s_.size() && (s_[pos_] == '*' || s_[pos_] == '/')) {
        sign = s_[pos_] == '/' ? -1 : 1;
        ++pos_;
      } else if (!starts_atom()) {
        return m;
      }
      auto rhs = power();
      if (!rhs) return std::nullopt;
      m->multiply(*rhs, sign);
    }
  }

  std::optional<Monomial> power() {
    auto m = atom();
    if (!m) return std::nullopt;
    if (s_.compare(pos_, 2, "\xC2\xB2") == 0) {
      pos_ += 2;
      m->raise(2);
    } else if (s_.compare(pos_, 2, "\xC2\xB3") == 0) {
      pos_ += 2;
      m->raise(3);
    } else if (pos_ < s_.size() && s_[pos_] == '^') {
      ++pos_;
      int n = 0;
      const char* first = s_.data() + pos_;
      if (pos_ < s_.size() && s_[pos_] == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, s_.data() + s_.size(), n);
      if (ec != std::errc()) return std::nullopt;
      pos_ = ptr - s_.data();
      m->raise(n);
    }
    return m;
  }

  std::optional<Monomial> atom() {
    skip();
    if (pos_ >= s_.size()) return std::nullopt;
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      auto m = product();
      skip();
      if (!m || pos_ >= s_.size() || s_[pos_] != ')') return std::nullopt;
      ++pos_;
      return m;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0;
      auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
      if (ec != std::errc() || v == 0.0) return std::nullopt;
      pos_ = ptr - s_.data();
      Monomial m;
      m.coef = v;
      return m;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size()) {
        const char d = s_[pos_];
        // A '-' joins words ("lb-ft-s") but never ends an identifier.
        const bool word = std::isalnum(static_cast<unsigned char>(d)) || d == '_';
        const bool joiner = d == '-' && pos_ + 1 < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_ + 1]));
        if (!word && !joiner) break;
        ++pos_;
      }
      Monomial m;
      m.powers.emplace_back(s_.substr(start, pos_ - start), 1);
      return m;
    }
    return std::nullopt;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

std::string power_suffix(int k) {
  if (k == 1) return "";
  if (k == 2) return "\xC2\xB2";
  if (k == 3) return "\xC2\xB3";
  return "^" + std::to_string(k);
}

std::string format_coef(double c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", c);
  return buf;
}

std::string render(const Monomial& m) {
  std::vector<std::string> num, den;
  for (const auto& [sym, k] : m.powers) {
    if (k > 0) num.push_back(sym + power_suffix(k));
    if (k < 0) den.push_back(sym + power_suffix(-k));
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "*" : "") + v[i];
    return out;
  };
  std::string out;
  if (m.coef != 1.0) out = format_coef(m.coef);
  if (!num.empty()) out += (out.empty() ? "" : " ") + join(num);
  if (out.empty()) out = "1";
  if (!den.empty()) out += "/" + (den.size() > 1 ? "(" + join(den) + ")" : den[0]);
  return out;
}

}  // namespace

std::optional<std::string> simplify_unit(const std::string& label) {
  const auto m = UnitParser(label).run();
  if (!m) return std::nullopt;
  return render(*m);
}

}  // namespace ocscale
