#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value is 2-D; sequences are stacked as [batch*steps x channels]
// and the ops that care about sequence boundaries take an explicit `seq_len`.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

namespace r2r::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Matrix value;
    Matrix grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g);
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    /// Leaf that is never differentiated.
    static Tensor constant(Matrix value);
    /// Leaf that accumulates gradients (a trainable weight).
    static Tensor parameter(Matrix value);

    bool defined() const { return static_cast<bool>(node_); }
    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    Matrix& mutable_grad() { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double item() const { return node_->value(0, 0); }

    void zero_grad() { node_->grad.resize(0, 0); }

    /// Back-propagates from this 1x1 tensor.
    void backward() const;

    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

/// Gradient recording is on by default; NoGradGuard turns it off for the
/// current thread (inference paths).
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Builds an op result. The backward closure is only kept when recording is
/// enabled and at least one parent requires a gradient.
Tensor make_result(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> backward);

}  // namespace r2r::nn
