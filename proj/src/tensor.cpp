#include "peca/tensor.hpp"

#include <cmath>
#include <sstream>

#include "peca/error.hpp"

namespace peca {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
    for (double v : data_)
        if (!std::isfinite(v)) throw NumericsError("non-finite value in tensor of shape " + shape_str(shape_));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    return shape_[axis];
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

double Tensor::at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

}  // namespace peca
