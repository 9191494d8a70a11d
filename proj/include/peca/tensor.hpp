#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace peca {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. Values are always finite; construction
// rejects NaN/Inf with NumericsError.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor vector(std::initializer_list<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    std::span<const double> data() const { return data_; }
    const std::vector<double>& values() const { return data_; }
    double operator[](std::size_t i) const { return data_[i]; }
    double item() const;

    // Multi-index accessor for rank 2 and rank 4 tensors.
    double at(std::size_t i, std::size_t j) const;
    double at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const;

    Tensor reshaped(Shape shape) const;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace peca
