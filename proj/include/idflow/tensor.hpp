#ifndef IDFLOW_TENSOR_HPP
#define IDFLOW_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace idflow {

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateVectorError : std::runtime_error {
    explicit DegenerateVectorError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FusionError : std::runtime_error {
    explicit FusionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major float64 tensor. The single value carrier of the library.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != data.size()) {
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        }
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) {
            if (e == 0) {
                throw DimensionError("zero extent in shape " + shape_str(s));
            }
            n *= e;
        }
        return n;
    }

    static std::string shape_str(const std::vector<std::size_t>& s) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) os << "x";
            os << s[i];
        }
        os << "]";
        return os.str();
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

    static Tensor matrix(std::size_t r, std::size_t c) { return Tensor({r, c}); }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
        return t;
    }

    static Tensor row(std::initializer_list<double> vals) {
        return Tensor({vals.size()}, std::vector<double>(vals));
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shape mismatch " +
                             Tensor::shape_str(a.shape) + " vs " + Tensor::shape_str(b.shape));
    }
}

// C = A * B with the summation over k running left to right. Keeping the
// accumulation order fixed makes every downstream result bit-reproducible.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
        throw DimensionError("matmul: incompatible shapes " + Tensor::shape_str(a.shape) +
                             " vs " + Tensor::shape_str(b.shape));
    }
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.data.data() + i * k;
        double* ci = c.data.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b.data.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += av * bp[j];
            }
        }
    }
    return c;
}

// A * B^T without materializing the transpose.
inline Tensor matmul_bt(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[1]) {
        throw DimensionError("matmul_bt: incompatible shapes " + Tensor::shape_str(a.shape) +
                             " vs " + Tensor::shape_str(b.shape));
    }
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.data.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b.data.data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            c.at(i, j) = s;
        }
    }
    return c;
}

// A^T * B without materializing the transpose.
inline Tensor matmul_at(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[0] != b.shape[0]) {
        throw DimensionError("matmul_at: incompatible shapes " + Tensor::shape_str(a.shape) +
                             " vs " + Tensor::shape_str(b.shape));
    }
    const std::size_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
    Tensor c({m, n});
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a.data.data() + p * m;
        const double* bp = b.data.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            double* ci = c.data.data() + i * n;
            const double av = ap[i];
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
    return c;
}

// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& a) {
    if (a.shape.size() != 2) {
        throw DimensionError("softmax_rows: expected a matrix, got " + Tensor::shape_str(a.shape));
    }
    const std::size_t m = a.shape[0], n = a.shape[1];
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = a.data.data() + i * n;
        double* y = out.data.data() + i * n;
        double mx = x[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) y[j] /= z;
    }
    return out;
}

// Backward of softmax_rows: given s = softmax(z) and ds, returns dz.
inline Tensor softmax_rows_backward(const Tensor& s, const Tensor& ds) {
    require_same_shape(s, ds, "softmax_rows_backward");
    const std::size_t m = s.shape[0], n = s.shape[1];
    Tensor dz({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* sv = s.data.data() + i * n;
        const double* dv = ds.data.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dv[j] * sv[j];
        double* out = dz.data.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) out[j] = sv[j] * (dv[j] - dot);
    }
    return dz;
}

inline double dot(const Tensor& u, const Tensor& v) {
    require_same_shape(u, v, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < u.numel(); ++i) s += u.data[i] * v.data[i];
    return s;
}

inline double norm(const Tensor& u) { return std::sqrt(dot(u, u)); }

// Cosine similarity, clamped against rounding. The ratio is formed in
// extended precision so exactly parallel inputs give exactly +/-1.
inline double cosine(const Tensor& u, const Tensor& v) {
    require_same_shape(u, v, "cosine");
    long double duv = 0.0L, duu = 0.0L, dvv = 0.0L;
    for (std::size_t i = 0; i < u.numel(); ++i) {
        duv += static_cast<long double>(u.data[i]) * v.data[i];
        duu += static_cast<long double>(u.data[i]) * u.data[i];
        dvv += static_cast<long double>(v.data[i]) * v.data[i];
    }
    if (duu == 0.0L || dvv == 0.0L) {
        throw DegenerateVectorError("cosine: zero-norm input vector");
    }
    const double r = static_cast<double>(duv / (sqrtl(duu) * sqrtl(dvv)));
    return std::clamp(r, -1.0, 1.0);
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) c.data[i] += b.data[i];
    return c;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) c.data[i] -= b.data[i];
    return c;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (double& v : c.data) v *= s;
    return c;
}

inline void add_inplace(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add_inplace");
    for (std::size_t i = 0; i < a.numel(); ++i) a.data[i] += b.data[i];
}

inline void axpy_inplace(Tensor& a, double s, const Tensor& b) {
    require_same_shape(a, b, "axpy_inplace");
    for (std::size_t i = 0; i < a.numel(); ++i) a.data[i] += s * b.data[i];
}

// a*x + b*y, elementwise.
inline Tensor lincomb(double a, const Tensor& x, double b, const Tensor& y) {
    require_same_shape(x, y, "lincomb");
    Tensor c(x.shape);
    for (std::size_t i = 0; i < c.numel(); ++i) c.data[i] = a * x.data[i] + b * y.data[i];
    return c;
}

inline Tensor flatten(const Tensor& t) { return Tensor({t.numel()}, t.data); }

inline Tensor reshape(const Tensor& t, std::vector<std::size_t> shape) {
    if (Tensor::numel_of(shape) != t.numel()) {
        throw DimensionError("reshape: cannot view " + Tensor::shape_str(t.shape) + " as " +
                             Tensor::shape_str(shape));
    }
    return Tensor(std::move(shape), t.data);
}

// Central-difference gradient of a scalar function, the gradient oracle every
// hand-derived backward pass in this library is checked against.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               double h = 1e-5) {
    if (!(h > 0.0)) throw DomainError("finite_diff_grad: step h must be positive");
    Tensor g(x.shape);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + h;
        const double fp = f(probe);
        probe.data[i] = orig - h;
        const double fm = f(probe);
        probe.data[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw DomainError("finite_diff_grad: non-finite evaluation at coordinate " +
                              std::to_string(i));
        }
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Relative error with an absolute floor, used by every gradient check.
inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const Tensor& a, const Tensor& b, double floor = 1e-6) {
    require_same_shape(a, b, "max_rel_err");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        worst = std::max(worst, rel_err(a.data[i], b.data[i], floor));
    }
    return worst;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (a.data[i] != b.data[i]) return false;
    }
    return true;
}

}  // namespace idflow

#endif
