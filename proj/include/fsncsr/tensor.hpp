#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fsncsr {

// Dense row-major real tensor. Values are 64-bit throughout; image I/O is the
// only place narrower types appear.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape);  // zero-filled
    Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

    static Tensor full(std::vector<std::int64_t> shape, double value);
    static Tensor scalar(double value) { return full({1}, value); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    const std::vector<std::int64_t>& shape() const { return shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // rank-3 (H, W, C) accessors, the common image/activation layout
    double& at(std::int64_t i, std::int64_t j, std::int64_t c) {
        return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + c)];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t c) const {
        return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + c)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    Tensor reshaped(std::vector<std::int64_t> new_shape) const;

    std::string shape_str() const;

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);
std::string shape_str(const std::vector<std::int64_t>& shape);

}  // namespace fsncsr
