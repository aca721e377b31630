#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asfs/errors.hpp"
#include "asfs/matrix.hpp"
#include "asfs/rng.hpp"

namespace asfs {

enum class NoiseKind { Gaussian, SaltPepper, Poisson, Speckle, GaussianBlur, MeanBlur, Missing };

inline const char* noise_name(NoiseKind k) {
    switch (k) {
        case NoiseKind::Gaussian: return "gaussian";
        case NoiseKind::SaltPepper: return "salt_pepper";
        case NoiseKind::Poisson: return "poisson";
        case NoiseKind::Speckle: return "speckle";
        case NoiseKind::GaussianBlur: return "gaussian_blur";
        case NoiseKind::MeanBlur: return "mean_blur";
        case NoiseKind::Missing: return "missing";
    }
    return "unknown";
}

inline NoiseKind noise_from_name(const std::string& s) {
    if (s == "gaussian") return NoiseKind::Gaussian;
    if (s == "salt_pepper") return NoiseKind::SaltPepper;
    if (s == "poisson") return NoiseKind::Poisson;
    if (s == "speckle") return NoiseKind::Speckle;
    if (s == "gaussian_blur") return NoiseKind::GaussianBlur;
    if (s == "mean_blur") return NoiseKind::MeanBlur;
    if (s == "missing") return NoiseKind::Missing;
    throw ValueError("unknown noise kind: " + s);
}

struct NoiseSpec {
    NoiseKind kind = NoiseKind::Gaussian;
    double mean = 0.0;
    double var = 0.01;          // gaussian / speckle
    double amount = 0.05;       // salt_pepper corrupted-cell fraction; missing fraction
    double salt_ratio = 0.5;    // salt share among corrupted cells
    double poisson_scale = 255.0;
    double blur_sigma = 1.0;    // gaussian blur, 3x3 kernel
    std::optional<std::pair<std::size_t, std::size_t>> grid;  // rows x cols = d, blur only
    std::uint64_t seed = 0;

    void validate(std::size_t d) const {
        if (var < 0.0) throw ValueError("noise: variance must be >= 0");
        if (amount < 0.0 || amount > 1.0) throw ValueError("noise: amount outside [0,1]");
        if (salt_ratio < 0.0 || salt_ratio > 1.0) throw ValueError("noise: salt_ratio outside [0,1]");
        if (kind == NoiseKind::GaussianBlur || kind == NoiseKind::MeanBlur) {
            if (!grid)
                throw ValueError("noise: blur requires an explicit 2-D grid shape for the features");
            if (grid->first * grid->second != d)
                throw ValueError("noise: grid " + std::to_string(grid->first) + "x" +
                                 std::to_string(grid->second) + " does not cover d=" +
                                 std::to_string(d));
        }
        if (kind == NoiseKind::Poisson && poisson_scale <= 0.0)
            throw ValueError("noise: poisson_scale must be > 0");
        if (kind == NoiseKind::GaussianBlur && blur_sigma <= 0.0)
            throw ValueError("noise: blur_sigma must be > 0");
    }
};

namespace detail {

// Reflective (clamp-to-edge mirror) index.
inline std::size_t reflect_index(long i, long n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return static_cast<std::size_t>(std::clamp(i, 0L, n - 1));
}

inline Matrix convolve_grid(const Matrix& x, std::size_t gr, std::size_t gc,
                            const std::vector<double>& kernel3x3) {
    Matrix out(x.rows, x.cols);
    for (std::size_t row = 0; row < x.rows; ++row) {
        for (long pi = 0; pi < static_cast<long>(gr); ++pi) {
            for (long pj = 0; pj < static_cast<long>(gc); ++pj) {
                double acc = 0.0;
                for (long di = -1; di <= 1; ++di) {
                    for (long dj = -1; dj <= 1; ++dj) {
                        const std::size_t qi = reflect_index(pi + di, static_cast<long>(gr));
                        const std::size_t qj = reflect_index(pj + dj, static_cast<long>(gc));
                        acc += kernel3x3[static_cast<std::size_t>((di + 1) * 3 + (dj + 1))] *
                               x(row, qi * gc + qj);
                    }
                }
                out(row, static_cast<std::size_t>(pi) * gc + static_cast<std::size_t>(pj)) = acc;
            }
        }
    }
    return out;
}

} // namespace detail

// Pure function of (input, spec, seed); outputs stay within [0,1].
inline Matrix apply_noise(const Matrix& x, const NoiseSpec& spec) {
    spec.validate(x.cols);
    Rng rng = Rng(spec.seed).split(noise_name(spec.kind));
    Matrix out = x;
    switch (spec.kind) {
        case NoiseKind::Gaussian: {
            const double sd = std::sqrt(spec.var);
            for (double& v : out.data) v = std::clamp(v + rng.normal(spec.mean, sd), 0.0, 1.0);
            break;
        }
        case NoiseKind::SaltPepper: {
            for (double& v : out.data)
                if (rng.uniform() < spec.amount) v = rng.uniform() < spec.salt_ratio ? 1.0 : 0.0;
            break;
        }
        case NoiseKind::Poisson: {
            for (double& v : out.data) {
                const double lam = std::clamp(v, 0.0, 1.0) * spec.poisson_scale;
                v = std::clamp(static_cast<double>(rng.poisson(lam)) / spec.poisson_scale, 0.0, 1.0);
            }
            break;
        }
        case NoiseKind::Speckle: {
            const double sd = std::sqrt(spec.var);
            for (double& v : out.data)
                v = std::clamp(v + rng.normal(spec.mean, sd) * v, 0.0, 1.0);
            break;
        }
        case NoiseKind::GaussianBlur: {
            std::vector<double> kernel(9);
            double sum = 0.0;
            for (long di = -1; di <= 1; ++di)
                for (long dj = -1; dj <= 1; ++dj) {
                    const double w = std::exp(-(di * di + dj * dj) /
                                              (2.0 * spec.blur_sigma * spec.blur_sigma));
                    kernel[static_cast<std::size_t>((di + 1) * 3 + (dj + 1))] = w;
                    sum += w;
                }
            for (double& w : kernel) w /= sum;
            out = detail::convolve_grid(x, spec.grid->first, spec.grid->second, kernel);
            break;
        }
        case NoiseKind::MeanBlur: {
            const std::vector<double> kernel(9, 1.0 / 9.0);
            out = detail::convolve_grid(x, spec.grid->first, spec.grid->second, kernel);
            break;
        }
        case NoiseKind::Missing: {
            for (double& v : out.data)
                if (rng.uniform() < spec.amount) v = 0.0;
            break;
        }
    }
    return out;
}

// Uniformly random cells zeroed; returns the corrupted matrix and the
// boolean missing map (1 = zeroed).
inline std::pair<Matrix, Matrix> missing_mask(const Matrix& x, double fraction,
                                              std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0) throw ValueError("missing_mask: fraction outside [0,1]");
    Rng rng = Rng(seed).split("missing");
    Matrix out = x;
    Matrix map(x.rows, x.cols, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (rng.uniform() < fraction) {
            out.data[i] = 0.0;
            map.data[i] = 1.0;
        }
    }
    return {std::move(out), std::move(map)};
}

} // namespace asfs
