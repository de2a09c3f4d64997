// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace slotspe {

/// Storage precision of tensor values. Arithmetic inside an op is carried out
/// in double; in f32 mode every op result is rounded to binary32 before it is
/// stored, so node values are exactly representable as float.
enum class Precision { f32, f64 };

void set_precision(Precision p);
Precision precision();

/// Rounds to the active storage precision.
double quantize(double v);

/// Scoped precision switch, restores the previous mode on destruction.
class PrecisionScope {
public:
    explicit PrecisionScope(Precision p);
    ~PrecisionScope();
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

private:
    Precision previous_;
};

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense row-major matrix. Scalars are 1x1, vectors are 1xn rows.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);
    Tensor(std::initializer_list<std::initializer_list<double>> rows);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor row(std::span<const double> v);

    const Shape& shape() const { return shape_; }
    std::size_t rows() const { return shape_.rows; }
    std::size_t cols() const { return shape_.cols; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_.cols + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return values_[r * shape_.cols + c]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::span<const double> row_span(std::size_t r) const {
        return std::span<const double>(values_).subspan(r * shape_.cols, shape_.cols);
    }

    double item() const;
    bool all_finite() const;
    void quantize_in_place();

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

}  // namespace slotspe
