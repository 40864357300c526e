#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace fleetrl {

// Bad input, bad config, violated precondition. CLI maps this to exit code 1.
struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Action incompatible with the current state (bounds or collective constraint).
struct infeasibility_error : validation_error {
    using validation_error::validation_error;
};

// Deterministic random stream. All randomness in the library goes through
// this wrapper so that sequences are bit-identical across platforms; the
// standard distributions are implementation-defined and are not used.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1) with 53-bit resolution
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // uniform index in [0, n); n >= 1
    std::size_t uniform_index(std::size_t n) {
        // multiply-shift map of a 64-bit draw onto [0, n)
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform_index(static_cast<std::size_t>(hi - lo) + 1));
    }

  private:
    std::mt19937_64 engine_;
};

// FNV-1a, used for order-independent seed derivation and output checksums.
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = 1469598103934665603ull) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace fleetrl
