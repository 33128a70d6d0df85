#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcn {

// All dense math is double precision, column-major (Eigen default).
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

inline Vector matvec(const Matrix& m, const Vector& v) {
    require(m.cols() == v.size(), "matvec: " + std::to_string(m.cols()) + " cols vs vector of " +
                                      std::to_string(v.size()));
    return m * v;
}

inline double dot(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "dot: length mismatch");
    return a.dot(b);
}

inline Vector axpy_scale(double alpha, const Vector& x, const Vector& y) {
    require(x.size() == y.size(), "axpy_scale: length mismatch");
    return alpha * x + y;
}

// Flat view over one parameter or gradient tensor. Order of views is fixed
// by the owning structure so optimizer state and checkpoints line up.
struct TensorView {
    double* data = nullptr;
    Index size = 0;
};

inline double global_norm(std::span<const TensorView> tensors) {
    double sq = 0.0;
    for (const auto& t : tensors) {
        for (Index i = 0; i < t.size; ++i) sq += t.data[i] * t.data[i];
    }
    return std::sqrt(sq);
}

inline double global_norm(const std::vector<TensorView>& tensors) {
    return global_norm(std::span<const TensorView>(tensors));
}

}  // namespace dcn
