// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_AUTODIFF_HPP
#define SINKSTREAM_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sinkstream/types.hpp"

namespace sinkstream::ad {

template <typename Scalar>
class Tape;

/// Handle to a matrix value recorded on a Tape.
template <typename Scalar>
struct Var {
    Tape<Scalar>* tape = nullptr;
    int id = -1;

    [[nodiscard]] const Matrix<Scalar>& value() const { return tape->value(id); }
    [[nodiscard]] Index rows() const { return value().rows(); }
    [[nodiscard]] Index cols() const { return value().cols(); }
};

/// Reverse-mode tape over dense matrices.
///
/// Nodes are appended in evaluation order; backward() walks them in reverse.
/// With recording disabled no closures are kept, so the same forward code
/// serves inference at the cost of holding intermediate values.
template <typename Scalar>
class Tape {
public:
    using Mat = Matrix<Scalar>;
    using Backward = std::function<void(Tape&, const Mat&)>;

    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    [[nodiscard]] bool recording() const { return record_; }

    Var<Scalar> constant(Mat value) { return push_node(std::move(value), false, {}); }

    /// Leaf that receives a gradient when recording.
    Var<Scalar> variable(Mat value) { return push_node(std::move(value), record_, {}); }

    Var<Scalar> push(Mat value, std::initializer_list<Var<Scalar>> inputs, Backward backward) {
        bool needs = false;
        if (record_) {
            for (const auto& v : inputs) needs = needs || nodes_[v.id].requires_grad;
        }
        return push_node(std::move(value), needs, needs ? std::move(backward) : Backward{});
    }

    Var<Scalar> push(Mat value, const std::vector<Var<Scalar>>& inputs, Backward backward) {
        bool needs = false;
        if (record_) {
            for (const auto& v : inputs) needs = needs || nodes_[v.id].requires_grad;
        }
        return push_node(std::move(value), needs, needs ? std::move(backward) : Backward{});
    }

    [[nodiscard]] const Mat& value(int id) const { return nodes_[id].value; }
    [[nodiscard]] bool requires_grad(Var<Scalar> v) const { return nodes_[v.id].requires_grad; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    template <typename Derived>
    void accumulate(Var<Scalar> v, const Eigen::MatrixBase<Derived>& g) {
        Node& n = nodes_[v.id];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    /// Gradient of the last backward() target with respect to v (zeros if unreached).
    [[nodiscard]] Mat grad(Var<Scalar> v) const {
        const Node& n = nodes_[v.id];
        if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    void backward(Var<Scalar> loss) {
        if (!record_) throw std::logic_error("backward on a non-recording tape");
        if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward target must be 1x1");
        for (auto& n : nodes_) n.grad.resize(0, 0);
        if (!nodes_[loss.id].requires_grad) return;
        nodes_[loss.id].grad = Mat::Ones(1, 1);
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.backward || n.grad.size() == 0) continue;
            // Closures only touch inputs, which precede this node.
            n.backward(*this, n.grad);
        }
    }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        Backward backward;
    };

    Var<Scalar> push_node(Mat value, bool requires_grad, Backward backward) {
        nodes_.push_back(Node{std::move(value), Mat(), requires_grad, std::move(backward)});
        return Var<Scalar>{this, static_cast<int>(nodes_.size() - 1)};
    }

    bool record_;
    std::vector<Node> nodes_;
};

namespace detail {

template <typename Scalar>
void require_same_tape(Var<Scalar> a, Var<Scalar> b) {
    if (a.tape != b.tape) throw std::invalid_argument("vars from different tapes");
}

inline std::string shape(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

} // namespace detail

/// Elementwise sum; `b` may be a 1 x cols row broadcast over the rows of `a`.
template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
    detail::require_same_tape(a, b);
    auto& t = *a.tape;
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
        return t.push(av + bv, {a, b}, [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
            tp.accumulate(a, g);
            tp.accumulate(b, g);
        });
    }
    if (bv.rows() == 1 && bv.cols() == av.cols()) {
        Matrix<Scalar> out = av.rowwise() + bv.row(0);
        return t.push(std::move(out), {a, b}, [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
            tp.accumulate(a, g);
            tp.accumulate(b, g.colwise().sum());
        });
    }
    throw std::invalid_argument("add: shape mismatch " + detail::shape(av.rows(), av.cols()) + " + " +
                                detail::shape(bv.rows(), bv.cols()));
}

template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) {
    detail::require_same_tape(a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.rows() != bv.rows() || av.cols() != bv.cols())
        throw std::invalid_argument("sub: shape mismatch " + detail::shape(av.rows(), av.cols()) + " - " +
                                    detail::shape(bv.rows(), bv.cols()));
    return a.tape->push(av - bv, {a, b}, [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, -g);
    });
}

/// Matrix product.
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b) {
    detail::require_same_tape(a, b);
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: shape mismatch " + detail::shape(a.rows(), a.cols()) + " * " +
                                    detail::shape(b.rows(), b.cols()));
    return a.tape->push(a.value() * b.value(), {a, b}, [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
        if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
    });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, Var<Scalar> a) {
    return a.tape->push(s * a.value(), {a},
                        [a, s](Tape<Scalar>& tp, const Matrix<Scalar>& g) { tp.accumulate(a, s * g); });
}

/// a * b^T without materializing the transpose on the tape.
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b) {
    detail::require_same_tape(a, b);
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    return a.tape->push(a.value() * b.value().transpose(), {a, b},
                        [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                            if (tp.requires_grad(a)) tp.accumulate(a, g * b.value());
                            if (tp.requires_grad(b)) tp.accumulate(b, g.transpose() * a.value());
                        });
}

/// Elementwise product; `b` may be a row broadcast over the rows of `a`.
template <typename Scalar>
Var<Scalar> cwise_product(Var<Scalar> a, Var<Scalar> b) {
    detail::require_same_tape(a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
        return a.tape->push(av.cwiseProduct(bv), {a, b}, [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
            tp.accumulate(a, g.cwiseProduct(b.value()));
            tp.accumulate(b, g.cwiseProduct(a.value()));
        });
    }
    if (bv.rows() == 1 && bv.cols() == av.cols()) {
        Matrix<Scalar> out = av.array().rowwise() * bv.row(0).array();
        return a.tape->push(std::move(out), {a, b}, [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
            Matrix<Scalar> ga = g.array().rowwise() * b.value().row(0).array();
            tp.accumulate(a, ga);
            tp.accumulate(b, g.cwiseProduct(a.value()).colwise().sum());
        });
    }
    throw std::invalid_argument("cwise_product: shape mismatch");
}

/// x * sigmoid(x).
template <typename Scalar>
Var<Scalar> silu(Var<Scalar> a) {
    const auto& x = a.value();
    Matrix<Scalar> sig = (Scalar(1) + (-x.array()).exp()).inverse().matrix();
    Matrix<Scalar> out = x.cwiseProduct(sig);
    return a.tape->push(std::move(out), {a}, [a, sig](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
        const auto& xv = a.value();
        Matrix<Scalar> d = (sig.array() * (Scalar(1) + xv.array() * (Scalar(1) - sig.array()))).matrix();
        tp.accumulate(a, g.cwiseProduct(d));
    });
}

namespace detail {

/// Row-wise standardization; returns (xhat, 1/sigma per row).
template <typename Scalar>
std::pair<Matrix<Scalar>, Vector<Scalar>> standardize_rows(const Matrix<Scalar>& x, Scalar eps) {
    const Index n = x.cols();
    Vector<Scalar> mean = x.rowwise().mean();
    Matrix<Scalar> centered = x.colwise() - mean;
    Vector<Scalar> var = centered.rowwise().squaredNorm() / static_cast<Scalar>(n);
    Vector<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
    Matrix<Scalar> xhat = inv_std.asDiagonal() * centered;
    return {std::move(xhat), std::move(inv_std)};
}

/// Backward of row standardization given d(xhat).
template <typename Scalar>
Matrix<Scalar> standardize_rows_backward(const Matrix<Scalar>& dxhat, const Matrix<Scalar>& xhat,
                                         const Vector<Scalar>& inv_std) {
    const Scalar n = static_cast<Scalar>(xhat.cols());
    Vector<Scalar> mean_d = dxhat.rowwise().sum() / n;
    Vector<Scalar> mean_dx = dxhat.cwiseProduct(xhat).rowwise().sum() / n;
    Matrix<Scalar> dx = dxhat.colwise() - mean_d;
    dx -= mean_dx.asDiagonal() * xhat;
    return inv_std.asDiagonal() * dx;
}

} // namespace detail

/// Per-row zero mean, unit variance (biased variance, eps inside the root).
template <typename Scalar>
Var<Scalar> normalize_rows(Var<Scalar> x, Scalar eps) {
    auto [xhat, inv_std] = detail::standardize_rows<Scalar>(x.value(), eps);
    Matrix<Scalar> out = xhat;
    return x.tape->push(std::move(out), {x},
                        [x, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& tp,
                                                                                  const Matrix<Scalar>& g) {
                            tp.accumulate(x, detail::standardize_rows_backward<Scalar>(g, xhat, inv_std));
                        });
}

/// Layer norm over each row with learned 1 x D gain and bias.
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias, Scalar eps = Scalar(1e-5)) {
    auto [xhat, inv_std] = detail::standardize_rows<Scalar>(x.value(), eps);
    Matrix<Scalar> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
    out.rowwise() += bias.value().row(0);
    return x.tape->push(
        std::move(out), {x, gain, bias},
        [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& tp,
                                                                              const Matrix<Scalar>& g) {
            if (tp.requires_grad(gain)) tp.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
            if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
            if (tp.requires_grad(x)) {
                Matrix<Scalar> dxhat = g.array().rowwise() * gain.value().row(0).array();
                tp.accumulate(x, detail::standardize_rows_backward<Scalar>(dxhat, xhat, inv_std));
            }
        });
}

/// Row softmax restricted to entries where `allowed` is true; every row needs
/// at least one allowed entry.
template <typename Scalar>
Var<Scalar> masked_softmax(Var<Scalar> scores, const BoolMask& allowed) {
    const auto& s = scores.value();
    if (allowed.rows() != s.rows() || allowed.cols() != s.cols())
        throw std::invalid_argument("masked_softmax: mask shape mismatch");
    Matrix<Scalar> p = Matrix<Scalar>::Zero(s.rows(), s.cols());
    for (Index i = 0; i < s.rows(); ++i) {
        Scalar mx = -std::numeric_limits<Scalar>::infinity();
        for (Index j = 0; j < s.cols(); ++j)
            if (allowed(i, j)) mx = std::max(mx, s(i, j));
        if (!std::isfinite(mx)) throw std::invalid_argument("masked_softmax: row with no allowed entry");
        Scalar total = 0;
        for (Index j = 0; j < s.cols(); ++j) {
            if (allowed(i, j)) {
                p(i, j) = std::exp(s(i, j) - mx);
                total += p(i, j);
            }
        }
        p.row(i) /= total;
    }
    Matrix<Scalar> out = p;
    return scores.tape->push(std::move(out), {scores},
                             [scores, p = std::move(p)](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                                 Vector<Scalar> dot = g.cwiseProduct(p).rowwise().sum();
                                 Matrix<Scalar> ds = p.cwiseProduct(g.colwise() - dot);
                                 tp.accumulate(scores, ds);
                             });
}

/// Contiguous row block [start, start + count).
template <typename Scalar>
Var<Scalar> rows(Var<Scalar> a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("rows: block out of range");
    Matrix<Scalar> out = a.value().middleRows(start, count);
    return a.tape->push(std::move(out), {a}, [a, start, count](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
        Matrix<Scalar> full = Matrix<Scalar>::Zero(a.rows(), a.cols());
        full.middleRows(start, count) = g;
        tp.accumulate(a, full);
    });
}

/// Contiguous column block [start, start + count).
template <typename Scalar>
Var<Scalar> cols(Var<Scalar> a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("cols: block out of range");
    Matrix<Scalar> out = a.value().middleCols(start, count);
    return a.tape->push(std::move(out), {a}, [a, start, count](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
        Matrix<Scalar> full = Matrix<Scalar>::Zero(a.rows(), a.cols());
        full.middleCols(start, count) = g;
        tp.accumulate(a, full);
    });
}

/// out.row(i) = a.row(index[i]); repeated indices accumulate on backward.
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::vector<Index> index) {
    Matrix<Scalar> out(static_cast<Index>(index.size()), a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= a.rows()) throw std::out_of_range("gather_rows: index out of range");
        out.row(static_cast<Index>(i)) = a.value().row(index[i]);
    }
    return a.tape->push(std::move(out), {a},
                        [a, index = std::move(index)](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                            Matrix<Scalar> full = Matrix<Scalar>::Zero(a.rows(), a.cols());
                            for (std::size_t i = 0; i < index.size(); ++i)
                                full.row(index[i]) += g.row(static_cast<Index>(i));
                            tp.accumulate(a, full);
                        });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const Index c = parts.front().cols();
    Index total = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
        total += p.rows();
    }
    Matrix<Scalar> out(total, c);
    Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return parts.front().tape->push(std::move(out), parts, [parts](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
        Index off = 0;
        for (const auto& p : parts) {
            const Index r = p.rows();
            if (tp.requires_grad(p)) tp.accumulate(p, g.middleRows(off, r));
            off += r;
        }
    });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const Index r = parts.front().rows();
    Index total = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) throw std::invalid_argument("concat_cols: row mismatch");
        total += p.cols();
    }
    Matrix<Scalar> out(r, total);
    Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return parts.front().tape->push(std::move(out), parts, [parts](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
        Index off = 0;
        for (const auto& p : parts) {
            const Index c = p.cols();
            if (tp.requires_grad(p)) tp.accumulate(p, g.middleCols(off, c));
            off += c;
        }
    });
}

/// Sum of squared entries as a 1 x 1 value.
template <typename Scalar>
Var<Scalar> sum_squares(Var<Scalar> a) {
    Matrix<Scalar> out(1, 1);
    out(0, 0) = a.value().squaredNorm();
    return a.tape->push(std::move(out), {a}, [a](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
        tp.accumulate(a, (Scalar(2) * g(0, 0)) * a.value());
    });
}

} // namespace sinkstream::ad

#endif // SINKSTREAM_AUTODIFF_HPP
