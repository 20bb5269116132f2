#include "efagg/rng.hpp"

#include <sstream>

namespace efagg {

namespace {

// splitmix64; used only for key derivation, never for sampling.
uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(uint64_t seed) : key_(mix(seed)), eng_(key_) {}

Rng Rng::substream(uint64_t a, uint64_t b, uint64_t c) const {
  uint64_t k = key_;
  k = mix(k ^ mix(a + 1));
  k = mix(k ^ mix(b + 2));
  k = mix(k ^ mix(c + 3));
  Rng out(0);
  out.key_ = k;
  out.eng_.seed(k);
  return out;
}

double Rng::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(eng_);
}

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(eng_);
}

int Rng::uniform_int(int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(eng_);
}

double Rng::normal() {
  return std::normal_distribution<double>(0.0, 1.0)(eng_);
}

double Rng::gamma(double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(eng_);
}

double Rng::student_t(double dof) {
  return std::student_t_distribution<double>(dof)(eng_);
}

std::string Rng::state_string() const {
  std::ostringstream os;
  os << key_ << ' ' << eng_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> key_ >> eng_;
}

}  // namespace efagg
