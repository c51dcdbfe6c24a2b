#pragma once

// Flat row layouts of the per-frame representations and per-column
// normalisation statistics.
//
// agent frame:    r_off(2) r_dir(2) pos(3J) rot6d(6J) vel(3J)
// opponent frame: pos(3J) rot6d(6J) vel(3J)
// root info:      offset(2) direction(2) ring_dist(1)
// sparse signal:  head pos(3) rot(6), left hand pos rot, right hand pos rot

#include "r2r/motion/pose.hpp"
#include "r2r/nn/archive.hpp"

#include <span>
#include <string>
#include <vector>

namespace r2r::model {

using nn::Matrix;
using nn::RowVector;

inline int agent_feature_dim(int joints) { return 4 + 12 * joints; }
inline int opponent_feature_dim(int joints) { return 12 * joints; }
inline constexpr int kRootInfoDim = 5;
inline constexpr int kSparseDim = 27;

RowVector flatten(const motion::MotionFrame& f);
RowVector flatten(const motion::OpponentFrame& f);
RowVector flatten(const motion::RootInfo& r);
RowVector flatten(const motion::SparseSignal& s);

motion::MotionFrame unflatten_agent(const RowVector& row, int joints);
motion::RootInfo unflatten_root(const RowVector& row);
motion::SparseSignal unflatten_sparse(const RowVector& row);

template <typename T>
Matrix stack(std::span<const T> items) {
    if (items.empty()) return {};
    const RowVector first = flatten(items.front());
    Matrix m(static_cast<Eigen::Index>(items.size()), first.cols());
    m.row(0) = first;
    for (std::size_t i = 1; i < items.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = flatten(items[i]);
    return m;
}

/// Per-column affine normalisation with a floor on the scale.
class Normalizer {
public:
    Normalizer() = default;
    explicit Normalizer(int dim) : mean_(RowVector::Zero(dim)), scale_(RowVector::Ones(dim)) {}

    static Normalizer fit(const Matrix& rows, double min_scale = 1e-2);

    Matrix apply(const Matrix& rows) const;
    Matrix invert(const Matrix& rows) const;
    int dim() const { return static_cast<int>(mean_.cols()); }

    void save(nn::Archive& ar, const std::string& name) const;
    static Normalizer load(const nn::Archive& ar, const std::string& name);

    const RowVector& mean() const { return mean_; }
    const RowVector& scale() const { return scale_; }

private:
    RowVector mean_;
    RowVector scale_;
};

/// Row-concatenates groups of `group` consecutive rows: [N x C] -> [N/group x group*C].
Matrix group_rows(const Matrix& rows, int group);
Matrix ungroup_rows(const Matrix& rows, int group);

}  // namespace r2r::model
