#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "cdpd/core/common.hpp"
#include "cdpd/core/rng.hpp"

namespace cdpd {

using Shape = std::vector<i64>;

inline i64 numel_of(const Shape& s) {
    i64 n = 1;
    for (i64 d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major tensor with value semantics. Volumes use (D, H, W, C)
// order: channel is the innermost (contiguous) axis.
template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(numel_of(shape_), T(0)) {
        for (i64 d : shape_) CDPD_CHECK(d >= 0, "negative dim in shape ", shape_str(shape_));
    }
    Tensor(Shape shape, T fill) : Tensor(std::move(shape)) {
        std::fill(data_.begin(), data_.end(), fill);
    }
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        CDPD_CHECK(i64(data_.size()) == numel_of(shape_), "data size ", data_.size(),
                   " does not match shape ", shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }
    static Tensor randn(Shape shape, Rng& rng, double mean = 0.0, double stddev = 1.0) {
        Tensor t(std::move(shape));
        rng.fill_normal(t.data(), t.numel(), mean, stddev);
        return t;
    }
    static Tensor rand(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
        Tensor t(std::move(shape));
        rng.fill_uniform(t.data(), t.numel(), lo, hi);
        return t;
    }

    const Shape& shape() const { return shape_; }
    i64 dim(int i) const { return shape_.at(size_t(i)); }
    int rank() const { return int(shape_.size()); }
    i64 numel() const { return i64(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](i64 i) { return data_[size_t(i)]; }
    const T& operator[](i64 i) const { return data_[size_t(i)]; }

    T& at4(i64 a, i64 b, i64 c, i64 d) {
        return data_[size_t(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }
    const T& at4(i64 a, i64 b, i64 c, i64 d) const {
        return data_[size_t(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }
    T& at2(i64 r, i64 c) { return data_[size_t(r * shape_[1] + c)]; }
    const T& at2(i64 r, i64 c) const { return data_[size_t(r * shape_[1] + c)]; }

    Tensor reshaped(Shape s) const {
        CDPD_CHECK(numel_of(s) == numel(), "reshape ", shape_str(shape_), " -> ", shape_str(s),
                   " changes element count");
        Tensor out = *this;
        out.shape_ = std::move(s);
        return out;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(double(v))) return false;
        return true;
    }

    double sum() const {
        double s = 0.0;
        for (const T& v : data_) s += double(v);
        return s;
    }

    double max_abs() const {
        double m = 0.0;
        for (const T& v : data_) m = std::max(m, std::abs(double(v)));
        return m;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (i64 i = 0; i < numel(); ++i) out[i] = U(data_[size_t(i)]);
        return out;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    CDPD_CHECK(a.same_shape(b), "max_abs_diff: shape mismatch ", shape_str(a.shape()), " vs ",
               shape_str(b.shape()));
    double m = 0.0;
    for (i64 i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

// FNV-1a over the raw bytes; used for frozen-parameter checksums.
template <class T>
u64 tensor_checksum(const Tensor<T>& t) {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(t.data());
    size_t nbytes = size_t(t.numel()) * sizeof(T);
    u64 h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < nbytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace cdpd
