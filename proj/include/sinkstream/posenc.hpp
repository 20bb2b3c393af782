// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_POSENC_HPP
#define SINKSTREAM_POSENC_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sinkstream/rng.hpp"
#include "sinkstream/types.hpp"

namespace sinkstream {

/// Cyclic temporal table index (1-based) for frame t (1-based).
///
/// Frames 1..2N-1 take their own row; later frames cycle over rows 2..2N-1
/// so row 1 stays reserved for the reference frame.
int temporal_index(long long t, int N);

/// The closed form ((t-1) mod (2N-2)) + 1 applied for t > 2N-1. Unlike
/// temporal_index it lands on row 1 once per cycle; kept for comparison.
int temporal_index_literal(long long t, int N);

/// Uniform draw of the first cycle slot in [2, 2N-1] for a training window.
int training_offset(int N, Rng& rng);

/// Table indices for a training window of `frames` frames: the reference
/// takes row 1, the rest take consecutive cycle slots from `offset`.
std::vector<int> training_indices(int N, int frames, int offset);

/// Fixed sinusoidal rows: entry (n, 2i) = sin(n / 10000^(2i/D)), (n, 2i+1) = cos(...).
template <typename Scalar>
Matrix<Scalar> sinusoid_table(int rows, int D) {
    Matrix<Scalar> table(rows, D);
    for (int n = 0; n < rows; ++n) {
        for (int i = 0; i < D; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / D);
            const double angle = n * freq;
            table(n, i) = static_cast<Scalar>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
        }
    }
    return table;
}

/// Quantized motion-intensity bin: floor(value / bin_width), clamped to the top bin.
int intensity_bin(double value, double bin_width, int bins);

/// Row of the intensity table selected by intensity_bin.
template <typename Scalar>
RowVector<Scalar> encode_intensity(const Matrix<Scalar>& table, double value, double bin_width) {
    return table.row(intensity_bin(value, bin_width, static_cast<int>(table.rows())));
}

} // namespace sinkstream

#endif // SINKSTREAM_POSENC_HPP
