#include "xgap/tensor.hpp"

#include <cmath>
#include <sstream>

#include "xgap/error.hpp"
#include "xgap/rng.hpp"

namespace xgap {

namespace {
std::size_t checked_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw InvalidArgument("tensor dims must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size())
        throw InvalidArgument("tensor shape does not match data length");
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_.assign(1, v);
    return t;
}

Tensor Tensor::gaussian(std::vector<int> shape, Rng& rng, double scale) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = scale * rng.gaussian();
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

int Tensor::rows() const {
    if (rank() != 2) throw InvalidArgument("rows(): tensor is not rank-2, shape " + shape_str());
    return shape_[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw InvalidArgument("cols(): tensor is not rank-2, shape " + shape_str());
    return shape_[1];
}

double& Tensor::at(int r, int c) {
    return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                 static_cast<std::size_t>(c)];
}

double Tensor::at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                 static_cast<std::size_t>(c)];
}

double Tensor::item() const {
    if (data_.size() != 1) throw InvalidArgument("item(): tensor has " +
                                                 std::to_string(data_.size()) + " elements");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ',';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

double norm(const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
    return std::sqrt(s);
}

}  // namespace xgap
