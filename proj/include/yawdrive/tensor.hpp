#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "yawdrive/errors.hpp"

namespace yawdrive {

using Shape = std::vector<int>;

inline std::string shape_string(const Shape& s)
{
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

inline Eigen::Index shape_size(const Shape& s)
{
    return std::accumulate(s.begin(), s.end(), Eigen::Index{1}, std::multiplies<>());
}

/// Dense row-major n-dimensional array.
template <typename Scalar>
class Tensor
{
  public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatrixMap = Eigen::Map<RowMatrix>;
    using ConstMatrixMap = Eigen::Map<const RowMatrix>;

    Tensor() = default;

    explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)), data_(shape_size(shape_))
    {
        data_.setConstant(fill);
    }

    Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (data_.size() != shape_size(shape_))
            throw ShapeError("data length " + std::to_string(data_.size()) + " does not match " + shape_string(shape_));
    }

    /// Tensor whose contents are left unspecified; callers overwrite every element.
    static Tensor uninitialized(Shape shape)
    {
        Tensor t;
        t.data_.resize(shape_size(shape));
        t.shape_ = std::move(shape);
        return t;
    }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    Eigen::Index size() const { return data_.size(); }
    bool empty() const { return data_.size() == 0; }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }
    Scalar* ptr() { return data_.data(); }
    const Scalar* ptr() const { return data_.data(); }

    Scalar& operator[](Eigen::Index i) { return data_[i]; }
    Scalar operator[](Eigen::Index i) const { return data_[i]; }

    /// Row-major matrix view over a contiguous block of the data.
    MatrixMap matrix(Eigen::Index rows, Eigen::Index cols, Eigen::Index offset = 0)
    {
        return MatrixMap(data_.data() + offset, rows, cols);
    }
    ConstMatrixMap matrix(Eigen::Index rows, Eigen::Index cols, Eigen::Index offset = 0) const
    {
        return ConstMatrixMap(data_.data() + offset, rows, cols);
    }

    void reshape(Shape shape)
    {
        if (shape_size(shape) != data_.size())
            throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        shape_ = std::move(shape);
    }

    void set_zero() { data_.setZero(); }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

  private:
    Shape shape_;
    Vector data_;
};

using Tensord = Tensor<double>;

} // namespace yawdrive
