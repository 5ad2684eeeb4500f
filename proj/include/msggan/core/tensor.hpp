#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "msggan/core/errors.hpp"

namespace msggan {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor with a shared buffer. Reshapes alias the buffer;
// every op in the autograd layer allocates a fresh output, so aliasing is
// only ever observable through explicit reshape.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(numel_of(shape_), T{0})) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
        if (values.size() != numel_of(shape_))
            throw ConfigError("tensor init: " + std::to_string(values.size()) +
                              " values for shape " + shape_str(shape_));
        data_ = std::make_shared<std::vector<T>>(std::move(values));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        t.fill(v);
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), T{1}); }

    static Tensor scalar(T v) { return full({1}, v); }

    bool defined() const { return static_cast<bool>(data_); }
    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_ ? data_->size() : 0; }

    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }

    T& operator[](std::size_t i) { return (*data_)[i]; }
    const T& operator[](std::size_t i) const { return (*data_)[i]; }

    // 4-d convenience accessor (NCHW hot path in tests and kernels).
    T& at4(std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
        return (*data_)[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at4(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
        return (*data_)[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    void fill(T v) { std::fill(data_->begin(), data_->end(), v); }

    Tensor reshape(Shape new_shape) const {
        if (numel_of(new_shape) != numel())
            throw ConfigError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape));
        Tensor t;
        t.shape_ = std::move(new_shape);
        t.data_ = data_;
        return t;
    }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<T>>(*data_);
        return t;
    }

    bool all_finite() const {
        for (const T& v : *data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
};

template <typename T>
inline void require_finite(const Tensor<T>& t, const char* what) {
    if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite values");
}

}  // namespace msggan
