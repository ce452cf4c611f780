// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gspop {

using GaussianId = std::uint32_t;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, invalid parameters, violated preconditions.
class InputError : public Error {
public:
    using Error::Error;
};

template <typename T>
struct Vec3 {
    T x{}, y{}, z{};

    constexpr T& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr const T& operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    constexpr Vec3& operator-=(const Vec3& o) {
        x -= o.x;
        y -= o.y;
        z -= o.z;
        return *this;
    }
    friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
    friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
    friend constexpr Vec3 operator*(T s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
    friend constexpr Vec3 operator*(const Vec3& v, T s) { return {s * v.x, s * v.y, s * v.z}; }
    friend constexpr Vec3 operator/(const Vec3& v, T s) { return {v.x / s, v.y / s, v.z / s}; }
    friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

    template <typename U>
    constexpr Vec3<U> cast() const {
        return {static_cast<U>(x), static_cast<U>(y), static_cast<U>(z)};
    }
};

template <typename T>
constexpr T dot(const Vec3<T>& a, const Vec3<T>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <typename T>
constexpr T squared_norm(const Vec3<T>& v) {
    return dot(v, v);
}

template <typename T>
Vec3<T> normalized(const Vec3<T>& v) {
    const T n = std::sqrt(squared_norm(v));
    return n > T(0) ? v / n : v;
}

template <typename T>
constexpr Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

using Rgb = Vec3<double>;

/// Row-major 3x3 matrix.
template <typename T>
struct Mat3 {
    std::array<T, 9> m{};

    constexpr T& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }
    constexpr T operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }

    static constexpr Mat3 identity() { return {{T(1), 0, 0, 0, T(1), 0, 0, 0, T(1)}}; }

    constexpr Mat3 transposed() const {
        Mat3 t;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    friend constexpr Mat3 operator*(const Mat3& a, const Mat3& b) {
        Mat3 out;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                T s = 0;
                for (int k = 0; k < 3; ++k) s += a(r, k) * b(k, c);
                out(r, c) = s;
            }
        return out;
    }

    friend constexpr Vec3<T> operator*(const Mat3& a, const Vec3<T>& v) {
        return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
                a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
                a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
    }
};

/// SplitMix64. The generator is pinned so that synthetic scenes and the
/// random baselines are reproducible across platforms and implementations.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

    constexpr std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Uses the multiply-shift reduction.
    constexpr std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
    }

private:
    std::uint64_t state_;
};

/// Number of workers to use for a requested thread count; 0 means all cores.
inline unsigned resolve_threads(unsigned requested) {
    if (requested != 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Splits [0, n) into contiguous chunks, one per worker, and runs
/// fn(begin, end, worker). With one worker everything runs on the caller.
template <typename Fn>
void parallel_chunks(std::size_t n, unsigned threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        fn(std::size_t{0}, n, 0u);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end, w] {
            try {
                fn(begin, end, static_cast<unsigned>(w));
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace gspop
