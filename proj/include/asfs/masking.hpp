#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "asfs/errors.hpp"
#include "asfs/matrix.hpp"
#include "asfs/rng.hpp"

namespace asfs {

constexpr std::size_t kNoDonor = std::numeric_limits<std::size_t>::max();

// A batch together with its Bernoulli mask and the identically-distributed
// corruption: masked cells are replaced with the same feature drawn from
// another sample in the pool.
struct MaskedBatch {
    Matrix original;                  // B x d
    Matrix mask;                      // B x d, 1 = replaced
    Matrix corrupted;                 // B x d
    double p_m = 0.0;
    std::vector<std::size_t> donors;  // B*d pool-row indices; kNoDonor where unmasked

    std::size_t donor(std::size_t i, std::size_t j) const { return donors[i * mask.cols + j]; }
};

// i.i.d. Bernoulli(p_m) per cell; every sample gets its own mask row.
inline Matrix sample_mask(std::size_t batch_size, std::size_t d, double p_m, Rng& rng) {
    if (p_m < 0.0 || p_m > 1.0) throw ValueError("sample_mask: p_m outside [0,1]");
    Matrix m(batch_size, d);
    for (double& v : m.data) v = rng.bernoulli(p_m) ? 1.0 : 0.0;
    return m;
}

// Replace each masked cell (i,j) with pool[r][j] for a uniformly drawn pool
// row r. When `batch_pool_rows` maps batch rows to pool rows (the batch is a
// view into the pool), the donor is redrawn until r differs from the cell's
// own row. Replacements that happen to equal the original value are kept.
inline MaskedBatch corrupt(const Matrix& batch, const Matrix& pool, const Matrix& mask, Rng& rng,
                           const std::vector<std::size_t>* batch_pool_rows = nullptr) {
    if (pool.rows < 2) throw ValueError("corrupt: pool needs at least 2 rows");
    if (batch.cols != pool.cols) throw DimensionError("corrupt: batch/pool column mismatch");
    require_same_shape(batch, mask, "corrupt");
    if (batch_pool_rows && batch_pool_rows->size() != batch.rows)
        throw DimensionError("corrupt: batch_pool_rows size mismatch");

    MaskedBatch out;
    out.original = batch;
    out.mask = mask;
    out.corrupted = batch;
    out.donors.assign(batch.size(), kNoDonor);
    for (std::size_t i = 0; i < batch.rows; ++i) {
        const std::size_t own = batch_pool_rows ? (*batch_pool_rows)[i] : kNoDonor;
        for (std::size_t j = 0; j < batch.cols; ++j) {
            if (mask(i, j) == 0.0) continue;
            std::size_t r = rng.uniform_index(pool.rows);
            while (r == own) r = rng.uniform_index(pool.rows);
            out.corrupted(i, j) = pool(r, j);
            out.donors[i * batch.cols + j] = r;
        }
    }
    return out;
}

} // namespace asfs
