#include "ocnopt/rng.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "ocnopt/errors.hpp"

namespace ocnopt {

double Rng::normal() {
  // u1 in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw dim_error("uniform_int: n must be positive");
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = eng_();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> p(static_cast<size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(p[static_cast<size_t>(i)],
              p[static_cast<size_t>(uniform_int(i + 1))]);
  return p;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << eng_;
  return os.str();
}

Rng Rng::deserialize(const std::string& s) {
  Rng r;
  std::istringstream is(s);
  is >> r.eng_;
  if (is.fail()) throw parse_error("Rng::deserialize: malformed state string");
  return r;
}

}  // namespace ocnopt
