#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace xgap {

class Rng;

// Dense row-major tensor of 64-bit floats. Rank 0 is a scalar; encoders work
// with rank-1 feature vectors and rank-2 (sequence x dim) matrices; image
// stacks are rank-4. Shape dims are strictly positive and their product
// always equals the data length.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
    static Tensor gaussian(std::vector<int> shape, Rng& rng, double scale);
    static Tensor full(std::vector<int> shape, double v);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }

    // Rank-2 accessors.
    int rows() const;
    int cols() const;
    double& at(int r, int c);
    double at(int r, int c) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const;  // value of a single-element tensor

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// Euclidean norm of all entries.
double norm(const Tensor& t);

}  // namespace xgap
