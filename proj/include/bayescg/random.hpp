#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace bayescg {

/// Seedable generator with a fixed, platform-independent algorithm.
///
/// The engine is std::mt19937_64, whose output sequence is fully specified by the
/// standard. Uniform and normal variates are derived here rather than through
/// std::*_distribution, whose algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal via the Box-Muller transform; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd z(n);
        for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
        return z;
    }

    /// Column-major fill, so column j holds draws (j*rows .. j*rows+rows-1).
    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd z(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = normal();
        return z;
    }

    /// Independent child stream, derived with splitmix64 so sibling streams do not overlap
    /// in their seeds.
    Rng split(std::uint64_t stream) const { return Rng(mix(seed_material() ^ mix(stream + 1))); }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_material() const {
        std::mt19937_64 copy = engine_;
        return copy();
    }

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace bayescg
