#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace efagg {

// Keyed deterministic RNG. Every consumer receives an explicit stream; there
// is no global state. Substreams are derived from (key, tags) so that e.g.
// task i of training step t is reproducible independently of batch size.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  // Derives an independent stream keyed by up to three tags.
  Rng substream(uint64_t a, uint64_t b = 0, uint64_t c = 0) const;

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  int uniform_int(int lo, int hi);        // inclusive
  double normal();                        // standard normal
  double gamma(double shape, double rate);
  double student_t(double dof);

  uint64_t key() const { return key_; }
  std::mt19937_64& engine() { return eng_; }

  std::string state_string() const;
  void set_state(const std::string& s);

 private:
  uint64_t key_;
  std::mt19937_64 eng_;
};

// Stream tags used across the library; values are arbitrary but fixed.
namespace stream {
inline constexpr uint64_t kParamInit = 0x11;
inline constexpr uint64_t kTrainBatch = 0x22;
inline constexpr uint64_t kTrainLatent = 0x33;
inline constexpr uint64_t kValTasks = 0x44;
inline constexpr uint64_t kEvalTasks = 0x55;
inline constexpr uint64_t kEvalLatent = 0x66;
inline constexpr uint64_t kCorrupt = 0x77;
}  // namespace stream

}  // namespace efagg
