// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_TYPES_HPP
#define SINKSTREAM_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

#include "sinkstream/config.hpp"

namespace sinkstream {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

/// One compressed video frame: S spatial tokens of width D.
template <typename Scalar>
struct LatentFrame {
    Matrix<Scalar> tokens;

    [[nodiscard]] bool matches(const ModelConfig& cfg) const {
        return tokens.rows() == cfg.S && tokens.cols() == cfg.D && tokens.allFinite();
    }
    void require(const ModelConfig& cfg) const {
        if (tokens.rows() != cfg.S || tokens.cols() != cfg.D)
            throw std::invalid_argument("latent frame shape " + std::to_string(tokens.rows()) + "x" +
                                        std::to_string(tokens.cols()) + " does not match S x D");
        if (!tokens.allFinite()) throw std::invalid_argument("latent frame has non-finite values");
    }
    template <typename Other>
    [[nodiscard]] LatentFrame<Other> cast() const {
        return {tokens.template cast<Other>()};
    }
};

/// Per-frame driving signals: audio-analog embedding and motion intensity.
template <typename Scalar>
struct ConditionFrame {
    Vector<Scalar> audio;
    Scalar intensity = 0;

    void require(const ModelConfig& cfg) const {
        if (audio.size() != cfg.A)
            throw std::invalid_argument("condition audio has " + std::to_string(audio.size()) +
                                        " values, expected A=" + std::to_string(cfg.A));
        if (!audio.allFinite()) throw std::invalid_argument("condition audio has non-finite values");
        if (!(intensity >= 0)) throw std::invalid_argument("condition intensity must be >= 0");
    }
    template <typename Other>
    [[nodiscard]] ConditionFrame<Other> cast() const {
        return {audio.template cast<Other>(), static_cast<Other>(intensity)};
    }
};

/// Outputs of the frame-causal transformer for one frame plus the anchored view.
template <typename Scalar>
struct FrameHidden {
    Matrix<Scalar> h;        // S x D visual outputs
    Matrix<Scalar> h_cond;   // M x D condition-token outputs
    Matrix<Scalar> h_anchor; // S x D after the adaLN sink
};

} // namespace sinkstream

#endif // SINKSTREAM_TYPES_HPP
