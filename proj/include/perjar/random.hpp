#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace perjar {

/// Seeded RNG whose outputs are identical on every standard library.
/// std::shuffle and the std distributions are implementation-defined, so
/// bounded draws are done here by rejection sampling over mt19937_64.
class DeterministicRng {
public:
    explicit DeterministicRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    /// Uniform real in [0, 1) with 53 bits of precision.
    double unit();

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <class T>
    void shuffle(std::vector<T>& items) {
        shuffle(std::span<T>(items));
    }

    /// k distinct positions from [0, n), returned in ascending order.
    std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
};

}  // namespace perjar
