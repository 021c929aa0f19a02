#pragma once

#include <Eigen/Core>

#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sgem/errors.hpp"

namespace sgem {

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

/// Dense n-dimensional array, row-major, flat Eigen storage.
template <typename S = float>
class Tensor {
public:
    using Scalar = S;

    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.setZero(numel(shape_));
    }

    Tensor(std::vector<int> shape, ArrayX<S> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        require(data_.size() == numel(shape_),
                "tensor data length does not match shape product");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor constant(std::vector<int> shape, S value) {
        Tensor t(std::move(shape));
        t.data_.setConstant(value);
        return t;
    }

    static Tensor from(std::vector<int> shape, std::initializer_list<S> values) {
        Tensor t(std::move(shape));
        require(Eigen::Index(values.size()) == t.size(), "initializer size mismatch");
        Eigen::Index i = 0;
        for (S v : values) t.data_[i++] = v;
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return int(shape_.size()); }
    int extent(int d) const { return shape_[std::size_t(d)]; }
    Eigen::Index size() const { return data_.size(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    ArrayX<S>& array() { return data_; }
    const ArrayX<S>& array() const { return data_; }

    S& operator[](Eigen::Index i) { return data_[i]; }
    S operator[](Eigen::Index i) const { return data_[i]; }

    S& operator()(int i, int j) { return data_[Eigen::Index(i) * shape_[1] + j]; }
    S operator()(int i, int j) const { return data_[Eigen::Index(i) * shape_[1] + j]; }
    S& operator()(int i, int j, int k) {
        return data_[(Eigen::Index(i) * shape_[1] + j) * shape_[2] + k];
    }
    S operator()(int i, int j, int k) const {
        return data_[(Eigen::Index(i) * shape_[1] + j) * shape_[2] + k];
    }
    S& operator()(int i, int j, int k, int l) {
        return data_[((Eigen::Index(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    S operator()(int i, int j, int k, int l) const {
        return data_[((Eigen::Index(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const { return data_.isFinite().all(); }

    void set_zero() { data_.setZero(); }

    /// Row-major 2-D matrix view over the flat data.
    Eigen::Map<MatrixRM<S>> matrix(Eigen::Index rows, Eigen::Index cols) {
        require(rows * cols == size(), "matrix view size mismatch");
        return Eigen::Map<MatrixRM<S>>(data_.data(), rows, cols);
    }
    Eigen::Map<const MatrixRM<S>> matrix(Eigen::Index rows, Eigen::Index cols) const {
        require(rows * cols == size(), "matrix view size mismatch");
        return Eigen::Map<const MatrixRM<S>>(data_.data(), rows, cols);
    }

    Eigen::Map<VectorX<S>> vector() { return Eigen::Map<VectorX<S>>(data_.data(), size()); }
    Eigen::Map<const VectorX<S>> vector() const {
        return Eigen::Map<const VectorX<S>>(data_.data(), size());
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t d = 0; d < shape_.size(); ++d)
            os << shape_[d] << (d + 1 < shape_.size() ? "," : "");
        os << ']';
        return os.str();
    }

    static Eigen::Index numel(const std::vector<int>& shape) {
        Eigen::Index n = 1;
        for (int e : shape) {
            require(e > 0, "tensor extents must be positive");
            n *= e;
        }
        return n;
    }

private:
    std::vector<int> shape_;
    ArrayX<S> data_;
};

using TensorXf = Tensor<float>;

} // namespace sgem
