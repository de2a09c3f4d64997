// SPDX-License-Identifier: Apache-2.0
#include "slotspe/tensor.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace slotspe {

namespace {
std::atomic<Precision> g_precision{Precision::f32};
}

void set_precision(Precision p) { g_precision.store(p, std::memory_order_relaxed); }

Precision precision() { return g_precision.load(std::memory_order_relaxed); }

double quantize(double v) {
    if (precision() == Precision::f32) return static_cast<double>(static_cast<float>(v));
    return v;
}

PrecisionScope::PrecisionScope(Precision p) : previous_(precision()) { set_precision(p); }

PrecisionScope::~PrecisionScope() { set_precision(previous_); }

std::string Shape::str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, values_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : shape_{rows, cols}, values_(std::move(values)) {
    if (values_.size() != rows * cols)
        throw std::invalid_argument("tensor: value count " + std::to_string(values_.size()) +
                                    " does not match shape " + shape_.str());
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    shape_.rows = rows.size();
    shape_.cols = rows.size() ? rows.begin()->size() : 0;
    values_.reserve(shape_.size());
    for (const auto& r : rows) {
        if (r.size() != shape_.cols) throw std::invalid_argument("tensor: ragged initializer");
        values_.insert(values_.end(), r.begin(), r.end());
    }
}

Tensor Tensor::row(std::span<const double> v) {
    return Tensor(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

double Tensor::item() const {
    if (values_.size() != 1) throw std::logic_error("tensor: item() on shape " + shape_.str());
    return values_[0];
}

bool Tensor::all_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::quantize_in_place() {
    if (precision() == Precision::f64) return;
    for (double& v : values_) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace slotspe
