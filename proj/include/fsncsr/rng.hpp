#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>

namespace fsncsr {

// xoshiro256++ with splitmix64 seeding. All stochastic draws in the project
// go through this generator so runs are reproducible from the config seed
// alone, independent of the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Derived stream: mixes the base seed with a path of identifiers
    // (e.g. {image_id, sample_index}) so parallel consumers get independent,
    // order-free streams.
    static Rng stream(std::uint64_t base_seed, std::initializer_list<std::uint64_t> path);

    std::uint64_t next();

    // uniform in [0, 1) with 53 random bits
    double uniform01();
    double uniform(double lo, double hi);

    // standard normal via Box-Muller (cached spare)
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // uniform integer in [0, n), rejection sampled
    std::uint64_t below(std::uint64_t n);

    bool coin() { return (next() >> 63) != 0; }

    std::array<std::uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) {
        s_ = s;
        has_spare_ = false;
    }

    // full state including the Box-Muller spare, so a restored generator
    // continues the exact draw sequence
    struct FullState {
        std::array<std::uint64_t, 4> words{};
        bool has_spare = false;
        std::uint64_t spare_bits = 0;
    };
    FullState full_state() const;
    void set_full_state(const FullState& st);

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Order-sensitive 64-bit mix of a byte string (FNV-1a); used for image ids
// and config hashes.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& s);

}  // namespace fsncsr
