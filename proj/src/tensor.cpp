#include "fsncsr/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fsncsr {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw std::invalid_argument("tensor data size does not match shape " + fsncsr::shape_str(shape_));
    }
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = value;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw std::invalid_argument("reshape " + fsncsr::shape_str(shape_) + " -> " + fsncsr::shape_str(new_shape) +
                                    " changes element count");
    }
    return Tensor(std::move(new_shape), data_);
}

std::string Tensor::shape_str() const { return fsncsr::shape_str(shape_); }

}  // namespace fsncsr
