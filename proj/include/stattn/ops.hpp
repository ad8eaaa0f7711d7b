#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "stattn/rng.hpp"
#include "stattn/tensor.hpp"

namespace stattn {

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch: " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

inline void require_rank(const char* op, const Tensor& t, std::size_t r) {
    if (t.rank() != r) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(r) +
                                    ", got shape " + shape_str(t.shape()));
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// element-wise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("add", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return Tensor::make(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                        [](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            auto& pb = *self.parents[1];
                            pa.ensure_grad();
                            pb.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                pa.grad[i] += self.grad[i];
                                pb.grad[i] += self.grad[i];
                            }
                        });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return Tensor::make(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                        [](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            auto& pb = *self.parents[1];
                            pa.ensure_grad();
                            pb.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                pa.grad[i] += self.grad[i];
                                pb.grad[i] -= self.grad[i];
                            }
                        });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return Tensor::make(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                        [](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            auto& pb = *self.parents[1];
                            pa.ensure_grad();
                            pb.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                pa.grad[i] += self.grad[i] * pb.data[i];
                                pb.grad[i] += self.grad[i] * pa.data[i];
                            }
                        });
}

/// Multiply every element by a compile-time constant.
inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
    return Tensor::make(a.shape(), std::move(out), {a.node_ptr()},
                        [c](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            pa.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                pa.grad[i] += self.grad[i] * c;
                            }
                        });
}

/// Broadcast a scalar-shaped tensor across a vector/matrix (element-wise
/// product with a learnable scalar).
inline Tensor scalar_mul(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) {
        throw std::invalid_argument("scalar_mul: scalar operand has shape " + shape_str(s.shape()));
    }
    const double sv = s[0];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * sv;
    return Tensor::make(a.shape(), std::move(out), {a.node_ptr(), s.node_ptr()},
                        [](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            auto& ps = *self.parents[1];
                            pa.ensure_grad();
                            ps.ensure_grad();
                            const double sv = ps.data[0];
                            double acc = 0.0;
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                pa.grad[i] += self.grad[i] * sv;
                                acc += self.grad[i] * pa.data[i];
                            }
                            ps.grad[0] += acc;
                        });
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

/// [r x k] * [k x c] -> [r x c]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_rank("matmul", a, 2);
    detail::require_rank("matmul", b, 2);
    const std::size_t r = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], c = b.shape()[1];
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dims differ: " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(r * c, 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ad[i * k + kk];
            if (av == 0.0) continue;
            const double* brow = bd.data() + kk * c;
            double* orow = out.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
        }
    }
    return Tensor::make({r, c}, std::move(out), {a.node_ptr(), b.node_ptr()},
                        [r, k, c](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            auto& pb = *self.parents[1];
                            pa.ensure_grad();
                            pb.ensure_grad();
                            // dA += G * B^T ; dB += A^T * G
                            for (std::size_t i = 0; i < r; ++i) {
                                for (std::size_t j = 0; j < c; ++j) {
                                    const double g = self.grad[i * c + j];
                                    if (g == 0.0) continue;
                                    for (std::size_t kk = 0; kk < k; ++kk) {
                                        pa.grad[i * k + kk] += g * pb.data[kk * c + j];
                                        pb.grad[kk * c + j] += g * pa.data[i * k + kk];
                                    }
                                }
                            }
                        });
}

/// [r x c] * [c] -> [r]
inline Tensor matvec(const Tensor& a, const Tensor& x) {
    detail::require_rank("matvec", a, 2);
    detail::require_rank("matvec", x, 1);
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    if (c != x.size()) {
        throw std::invalid_argument("matvec: dims differ: " + shape_str(a.shape()) + " vs " +
                                    shape_str(x.shape()));
    }
    std::vector<double> out(r, 0.0);
    const auto& ad = a.data();
    const auto& xd = x.data();
    for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        const double* row = ad.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) acc += row[j] * xd[j];
        out[i] = acc;
    }
    return Tensor::make({r}, std::move(out), {a.node_ptr(), x.node_ptr()},
                        [r, c](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            auto& px = *self.parents[1];
                            pa.ensure_grad();
                            px.ensure_grad();
                            for (std::size_t i = 0; i < r; ++i) {
                                const double g = self.grad[i];
                                if (g == 0.0) continue;
                                for (std::size_t j = 0; j < c; ++j) {
                                    pa.grad[i * c + j] += g * px.data[j];
                                    px.grad[j] += g * pa.data[i * c + j];
                                }
                            }
                        });
}

/// A^T * x: [r x c], [r] -> [c]
inline Tensor tmatvec(const Tensor& a, const Tensor& x) {
    detail::require_rank("tmatvec", a, 2);
    detail::require_rank("tmatvec", x, 1);
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    if (r != x.size()) {
        throw std::invalid_argument("tmatvec: dims differ: " + shape_str(a.shape()) + " vs " +
                                    shape_str(x.shape()));
    }
    std::vector<double> out(c, 0.0);
    const auto& ad = a.data();
    const auto& xd = x.data();
    for (std::size_t i = 0; i < r; ++i) {
        const double xv = xd[i];
        if (xv == 0.0) continue;
        const double* row = ad.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) out[j] += row[j] * xv;
    }
    return Tensor::make({c}, std::move(out), {a.node_ptr(), x.node_ptr()},
                        [r, c](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            auto& px = *self.parents[1];
                            pa.ensure_grad();
                            px.ensure_grad();
                            for (std::size_t i = 0; i < r; ++i) {
                                double acc = 0.0;
                                for (std::size_t j = 0; j < c; ++j) {
                                    const double g = self.grad[j];
                                    pa.grad[i * c + j] += g * px.data[i];
                                    acc += g * pa.data[i * c + j];
                                }
                                px.grad[i] += acc;
                            }
                        });
}

inline Tensor transpose(const Tensor& a) {
    detail::require_rank("transpose", a, 2);
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
    }
    return Tensor::make({c, r}, std::move(out), {a.node_ptr()},
                        [r, c](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            pa.ensure_grad();
                            for (std::size_t i = 0; i < r; ++i) {
                                for (std::size_t j = 0; j < c; ++j) {
                                    pa.grad[i * c + j] += self.grad[j * r + i];
                                }
                            }
                        });
}

/// Add vector v[r] to every column of M[r x c].
inline Tensor add_col_broadcast(const Tensor& m, const Tensor& v) {
    detail::require_rank("add_col_broadcast", m, 2);
    detail::require_rank("add_col_broadcast", v, 1);
    const std::size_t r = m.shape()[0], c = m.shape()[1];
    if (v.size() != r) {
        throw std::invalid_argument("add_col_broadcast: dims differ: " + shape_str(m.shape()) +
                                    " vs " + shape_str(v.shape()));
    }
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const double vv = v[i];
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m[i * c + j] + vv;
    }
    return Tensor::make({r, c}, std::move(out), {m.node_ptr(), v.node_ptr()},
                        [r, c](detail::Node& self) {
                            auto& pm = *self.parents[0];
                            auto& pv = *self.parents[1];
                            pm.ensure_grad();
                            pv.ensure_grad();
                            for (std::size_t i = 0; i < r; ++i) {
                                double acc = 0.0;
                                for (std::size_t j = 0; j < c; ++j) {
                                    const double g = self.grad[i * c + j];
                                    pm.grad[i * c + j] += g;
                                    acc += g;
                                }
                                pv.grad[i] += acc;
                            }
                        });
}

// ---------------------------------------------------------------------------
// non-linearities
// ---------------------------------------------------------------------------

inline Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
    return Tensor::make(a.shape(), std::move(out), {a.node_ptr()},
                        [](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            pa.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                const double y = self.data[i];
                                pa.grad[i] += self.grad[i] * (1.0 - y * y);
                            }
                        });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
    return Tensor::make(a.shape(), std::move(out), {a.node_ptr()},
                        [](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            pa.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                const double y = self.data[i];
                                pa.grad[i] += self.grad[i] * y * (1.0 - y);
                            }
                        });
}

/// Element-wise square root. Inputs must be non-negative; the derivative is
/// unbounded at 0, which is the true behaviour of a root-mean-square loss.
inline Tensor sqrt(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a[i]);
    return Tensor::make(a.shape(), std::move(out), {a.node_ptr()},
                        [](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            pa.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                pa.grad[i] += self.grad[i] * 0.5 / self.data[i];
                            }
                        });
}

namespace detail {

inline void softmax_span(const double* in, double* out, std::size_t n) {
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(in[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

inline void softmax_backprop_span(const double* y, const double* g, double* dx, std::size_t n) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
    for (std::size_t i = 0; i < n; ++i) dx[i] += y[i] * (g[i] - dot);
}

} // namespace detail

/// Softmax over the whole vector (rank 1) with max-subtraction for stability.
inline Tensor softmax(const Tensor& a) {
    detail::require_rank("softmax", a, 1);
    if (a.size() == 0) throw std::invalid_argument("softmax: empty axis");
    std::vector<double> out(a.size());
    detail::softmax_span(a.data().data(), out.data(), a.size());
    return Tensor::make(a.shape(), std::move(out), {a.node_ptr()},
                        [](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            pa.ensure_grad();
                            detail::softmax_backprop_span(self.data.data(), self.grad.data(),
                                                          pa.grad.data(), self.data.size());
                        });
}

/// Softmax of a matrix along an axis: axis 1 normalizes each row, axis 0
/// each column.
inline Tensor softmax(const Tensor& a, int axis) {
    detail::require_rank("softmax", a, 2);
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    if (axis != 0 && axis != 1) throw std::invalid_argument("softmax: axis must be 0 or 1");
    const std::size_t n = (axis == 1) ? c : r;
    if (n == 0) throw std::invalid_argument("softmax: empty axis");
    std::vector<double> out(r * c);
    if (axis == 1) {
        for (std::size_t i = 0; i < r; ++i) {
            detail::softmax_span(a.data().data() + i * c, out.data() + i * c, c);
        }
    } else {
        std::vector<double> col(r), res(r);
        for (std::size_t j = 0; j < c; ++j) {
            for (std::size_t i = 0; i < r; ++i) col[i] = a[i * c + j];
            detail::softmax_span(col.data(), res.data(), r);
            for (std::size_t i = 0; i < r; ++i) out[i * c + j] = res[i];
        }
    }
    return Tensor::make({r, c}, std::move(out), {a.node_ptr()},
                        [r, c, axis](detail::Node& self) {
                            auto& pa = *self.parents[0];
                            pa.ensure_grad();
                            if (axis == 1) {
                                for (std::size_t i = 0; i < r; ++i) {
                                    detail::softmax_backprop_span(self.data.data() + i * c,
                                                                  self.grad.data() + i * c,
                                                                  pa.grad.data() + i * c, c);
                                }
                            } else {
                                std::vector<double> y(r), g(r), dx(r);
                                for (std::size_t j = 0; j < c; ++j) {
                                    for (std::size_t i = 0; i < r; ++i) {
                                        y[i] = self.data[i * c + j];
                                        g[i] = self.grad[i * c + j];
                                        dx[i] = 0.0;
                                    }
                                    detail::softmax_backprop_span(y.data(), g.data(), dx.data(), r);
                                    for (std::size_t i = 0; i < r; ++i) pa.grad[i * c + j] += dx[i];
                                }
                            }
                        });
}

// ---------------------------------------------------------------------------
// shape manipulation
// ---------------------------------------------------------------------------

/// Concatenate vectors (axis 0) or matrices along the given axis.
inline Tensor concat(const std::vector<Tensor>& parts, int axis = 0) {
    if (parts.empty()) throw std::invalid_argument("concat: no operands");
    const std::size_t rank = parts[0].rank();
    if (rank == 1) {
        if (axis != 0) throw std::invalid_argument("concat: rank-1 tensors only have axis 0");
        std::size_t total = 0;
        for (const auto& p : parts) {
            detail::require_rank("concat", p, 1);
            total += p.size();
        }
        std::vector<double> out;
        out.reserve(total);
        std::vector<std::shared_ptr<detail::Node>> parents;
        std::vector<std::size_t> sizes;
        for (const auto& p : parts) {
            out.insert(out.end(), p.data().begin(), p.data().end());
            parents.push_back(p.node_ptr());
            sizes.push_back(p.size());
        }
        return Tensor::make({total}, std::move(out), std::move(parents),
                            [sizes](detail::Node& self) {
                                std::size_t off = 0;
                                for (std::size_t k = 0; k < sizes.size(); ++k) {
                                    auto& p = *self.parents[k];
                                    p.ensure_grad();
                                    for (std::size_t i = 0; i < sizes[k]; ++i) {
                                        p.grad[i] += self.grad[off + i];
                                    }
                                    off += sizes[k];
                                }
                            });
    }
    if (rank != 2 || (axis != 0 && axis != 1)) {
        throw std::invalid_argument("concat: unsupported rank/axis");
    }
    const std::size_t fixed = parts[0].shape()[axis == 0 ? 1 : 0];
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::require_rank("concat", p, 2);
        if (p.shape()[axis == 0 ? 1 : 0] != fixed) {
            throw std::invalid_argument("concat: shape mismatch: " + shape_str(parts[0].shape()) +
                                        " vs " + shape_str(p.shape()));
        }
        total += p.shape()[axis];
    }
    const Shape out_shape = (axis == 0) ? Shape{total, fixed} : Shape{fixed, total};
    std::vector<double> out(shape_size(out_shape));
    std::vector<std::shared_ptr<detail::Node>> parents;
    std::vector<std::size_t> extents;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t e = p.shape()[axis];
        if (axis == 0) {
            std::copy(p.data().begin(), p.data().end(), out.begin() + off * fixed);
        } else {
            for (std::size_t i = 0; i < fixed; ++i) {
                for (std::size_t j = 0; j < e; ++j) out[i * total + off + j] = p[i * e + j];
            }
        }
        parents.push_back(p.node_ptr());
        extents.push_back(e);
        off += e;
    }
    return Tensor::make(out_shape, std::move(out), std::move(parents),
                        [axis, fixed, total, extents](detail::Node& self) {
                            std::size_t off = 0;
                            for (std::size_t k = 0; k < extents.size(); ++k) {
                                auto& p = *self.parents[k];
                                p.ensure_grad();
                                const std::size_t e = extents[k];
                                if (axis == 0) {
                                    for (std::size_t i = 0; i < e * fixed; ++i) {
                                        p.grad[i] += self.grad[off * fixed + i];
                                    }
                                } else {
                                    for (std::size_t i = 0; i < fixed; ++i) {
                                        for (std::size_t j = 0; j < e; ++j) {
                                            p.grad[i * e + j] += self.grad[i * total + off + j];
                                        }
                                    }
                                }
                                off += e;
                            }
                        });
}

inline Tensor concat(const Tensor& a, const Tensor& b, int axis = 0) {
    return concat(std::vector<Tensor>{a, b}, axis);
}

/// Contiguous slice of a vector: elements [offset, offset+len).
inline Tensor slice(const Tensor& v, std::size_t offset, std::size_t len) {
    detail::require_rank("slice", v, 1);
    if (offset + len > v.size()) {
        throw std::invalid_argument("slice: range [" + std::to_string(offset) + ", " +
                                    std::to_string(offset + len) + ") exceeds shape " +
                                    shape_str(v.shape()));
    }
    std::vector<double> out(v.data().begin() + offset, v.data().begin() + offset + len);
    return Tensor::make({len}, std::move(out), {v.node_ptr()},
                        [offset, len](detail::Node& self) {
                            auto& p = *self.parents[0];
                            p.ensure_grad();
                            for (std::size_t i = 0; i < len; ++i) {
                                p.grad[offset + i] += self.grad[i];
                            }
                        });
}

/// Row i of a matrix as a vector.
inline Tensor row_vec(const Tensor& m, std::size_t i) {
    detail::require_rank("row_vec", m, 2);
    const std::size_t r = m.shape()[0], c = m.shape()[1];
    if (i >= r) {
        throw std::invalid_argument("row_vec: row " + std::to_string(i) + " out of shape " +
                                    shape_str(m.shape()));
    }
    std::vector<double> out(m.data().begin() + i * c, m.data().begin() + (i + 1) * c);
    return Tensor::make({c}, std::move(out), {m.node_ptr()},
                        [i, c](detail::Node& self) {
                            auto& p = *self.parents[0];
                            p.ensure_grad();
                            for (std::size_t j = 0; j < c; ++j) {
                                p.grad[i * c + j] += self.grad[j];
                            }
                        });
}

/// Rows [row0, row0+nrows) of a matrix.
inline Tensor slice_rows(const Tensor& m, std::size_t row0, std::size_t nrows) {
    detail::require_rank("slice_rows", m, 2);
    const std::size_t r = m.shape()[0], c = m.shape()[1];
    if (row0 + nrows > r) {
        throw std::invalid_argument("slice_rows: rows [" + std::to_string(row0) + ", " +
                                    std::to_string(row0 + nrows) + ") exceed shape " +
                                    shape_str(m.shape()));
    }
    std::vector<double> out(m.data().begin() + row0 * c, m.data().begin() + (row0 + nrows) * c);
    return Tensor::make({nrows, c}, std::move(out), {m.node_ptr()},
                        [row0, nrows, c](detail::Node& self) {
                            auto& p = *self.parents[0];
                            p.ensure_grad();
                            for (std::size_t i = 0; i < nrows * c; ++i) {
                                p.grad[row0 * c + i] += self.grad[i];
                            }
                        });
}

/// Stack equal-length vectors into a matrix, one per row.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no operands");
    const std::size_t c = rows[0].size();
    std::vector<double> out;
    out.reserve(rows.size() * c);
    std::vector<std::shared_ptr<detail::Node>> parents;
    for (const auto& v : rows) {
        detail::require_rank("stack_rows", v, 1);
        if (v.size() != c) {
            throw std::invalid_argument("stack_rows: length mismatch: " +
                                        shape_str(rows[0].shape()) + " vs " + shape_str(v.shape()));
        }
        out.insert(out.end(), v.data().begin(), v.data().end());
        parents.push_back(v.node_ptr());
    }
    return Tensor::make({rows.size(), c}, std::move(out), std::move(parents),
                        [c](detail::Node& self) {
                            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                auto& p = *self.parents[k];
                                p.ensure_grad();
                                for (std::size_t j = 0; j < c; ++j) {
                                    p.grad[j] += self.grad[k * c + j];
                                }
                            }
                        });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
    return Tensor::make({1}, {acc}, {a.node_ptr()},
                        [](detail::Node& self) {
                            auto& p = *self.parents[0];
                            p.ensure_grad();
                            const double g = self.grad[0];
                            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
                        });
}

/// Mean of squared entries, as a scalar.
inline Tensor mean_square(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean_square: empty tensor");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * a[i];
    const double inv_n = 1.0 / static_cast<double>(a.size());
    return Tensor::make({1}, {acc * inv_n}, {a.node_ptr()},
                        [inv_n](detail::Node& self) {
                            auto& p = *self.parents[0];
                            p.ensure_grad();
                            const double g = self.grad[0];
                            for (std::size_t i = 0; i < p.grad.size(); ++i) {
                                p.grad[i] += g * 2.0 * p.data[i] * inv_n;
                            }
                        });
}

inline Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

/// Inverted dropout: at training, keep each element with probability
/// keep_prob and rescale by 1/keep_prob; at inference, exact identity.
inline Tensor dropout(const Tensor& a, double keep_prob, bool training, Rng& rng) {
    if (keep_prob <= 0.0 || keep_prob > 1.0) {
        throw std::invalid_argument("dropout: keep probability must be in (0, 1], got " +
                                    std::to_string(keep_prob));
    }
    if (!training || keep_prob == 1.0) {
        // Identity pass-through node keeps the graph explicit.
        std::vector<double> out(a.data());
        return Tensor::make(a.shape(), std::move(out), {a.node_ptr()},
                            [](detail::Node& self) {
                                auto& p = *self.parents[0];
                                p.ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    p.grad[i] += self.grad[i];
                                }
                            });
    }
    std::vector<double> mask(a.size());
    const double inv_keep = 1.0 / keep_prob;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.bernoulli(keep_prob) ? inv_keep : 0.0;
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * mask[i];
    return Tensor::make(a.shape(), std::move(out), {a.node_ptr()},
                        [mask = std::move(mask)](detail::Node& self) {
                            auto& p = *self.parents[0];
                            p.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                p.grad[i] += self.grad[i] * mask[i];
                            }
                        });
}

} // namespace stattn
