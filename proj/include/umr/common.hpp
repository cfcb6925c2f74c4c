#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace umr {

// Validation failure in user-supplied input or config. Exit code 1 at the CLI.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal invariant violation or unrecoverable I/O failure. Exit code 2.
class FatalError : public std::runtime_error {
public:
    explicit FatalError(const std::string& msg) : std::runtime_error(msg) {}
};

// 64-bit mixing finalizer (splitmix64). Used everywhere a stable,
// platform-independent hash is required.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seeded string hash: FNV-1a over the bytes, then mixed with the seed.
// The seed is pinned in config so feature spaces are reproducible.
inline uint64_t hash_bytes(std::string_view s, uint64_t seed) {
    uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

// Running content hash for fingerprints (checkpoints, manifests).
class Fingerprint {
public:
    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    template <typename T>
    void update_pod(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update(&v, sizeof(v));
    }
    uint64_t digest() const { return mix64(h_); }
    std::string hex() const;

private:
    uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(uint64_t v);

// Deterministic RNG with portable derived draws. std::mt19937_64 has a
// pinned algorithm in the standard; the distribution helpers below avoid
// std::uniform_*_distribution whose output is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x2545f4914f6cdd1dULL) {}

    uint64_t next_u64() {
        state_ = mix64(state_ + 0x632be59bd9b4e019ULL);
        return state_;
    }
    // Uniform in [0, n), n > 0.
    uint64_t below(uint64_t n) { return next_u64() % n; }
    // Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * (1.0 / 9007199254740992.0); }
    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

// Worker count resolution: explicit value > 0 wins, otherwise UMR_THREADS,
// otherwise hardware concurrency.
int resolve_threads(int requested);

// Run fn(i) for i in [0, n) across up to `threads` workers. Results must be
// written to pre-sized slots so output order is deterministic.
void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn);

}  // namespace umr
