#include "r2r/model/features.hpp"

#include "r2r/common/error.hpp"

#include <cmath>

namespace r2r::model {

namespace {

template <typename M>
void put_block(RowVector& row, Eigen::Index& at, const M& block) {
    for (Eigen::Index i = 0; i < block.rows(); ++i)
        for (Eigen::Index j = 0; j < block.cols(); ++j) row(at++) = block(i, j);
}

template <typename M>
void take_block(const RowVector& row, Eigen::Index& at, M& block) {
    for (Eigen::Index i = 0; i < block.rows(); ++i)
        for (Eigen::Index j = 0; j < block.cols(); ++j) block(i, j) = row(at++);
}

}  // namespace

RowVector flatten(const motion::MotionFrame& f) {
    const auto j = f.pos.rows();
    RowVector row(4 + 12 * j);
    Eigen::Index at = 0;
    row(at++) = f.r_off.x();
    row(at++) = f.r_off.y();
    row(at++) = f.r_dir.x();
    row(at++) = f.r_dir.y();
    put_block(row, at, f.pos);
    put_block(row, at, f.rot);
    put_block(row, at, f.vel);
    return row;
}

RowVector flatten(const motion::OpponentFrame& f) {
    const auto j = f.pos.rows();
    RowVector row(12 * j);
    Eigen::Index at = 0;
    put_block(row, at, f.pos);
    put_block(row, at, f.rot);
    put_block(row, at, f.vel);
    return row;
}

RowVector flatten(const motion::RootInfo& r) {
    RowVector row(kRootInfoDim);
    row << r.offset.x(), r.offset.y(), r.direction.x(), r.direction.y(), r.ring_dist;
    return row;
}

RowVector flatten(const motion::SparseSignal& s) {
    RowVector row(kSparseDim);
    row << s.head_pos.transpose(), s.head_rot6d.transpose(), s.lhand_pos.transpose(), s.lhand_rot6d.transpose(),
        s.rhand_pos.transpose(), s.rhand_rot6d.transpose();
    return row;
}

motion::MotionFrame unflatten_agent(const RowVector& row, int joints) {
    if (row.cols() != agent_feature_dim(joints))
        throw DataError(DataErrc::invalid_argument, "agent feature row has the wrong width");
    motion::MotionFrame f;
    f.r_off = motion::Vec2(row(0), row(1));
    f.r_dir = motion::Vec2(row(2), row(3));
    f.pos.resize(joints, 3);
    f.rot.resize(joints, 6);
    f.vel.resize(joints, 3);
    Eigen::Index at = 4;
    take_block(row, at, f.pos);
    take_block(row, at, f.rot);
    take_block(row, at, f.vel);
    return f;
}

motion::RootInfo unflatten_root(const RowVector& row) {
    motion::RootInfo r;
    r.offset = motion::Vec2(row(0), row(1));
    r.direction = motion::Vec2(row(2), row(3));
    r.ring_dist = row(4);
    return r;
}

motion::SparseSignal unflatten_sparse(const RowVector& row) {
    motion::SparseSignal s;
    s.head_pos = row.segment<3>(0).transpose();
    s.head_rot6d = row.segment<6>(3).transpose();
    s.lhand_pos = row.segment<3>(9).transpose();
    s.lhand_rot6d = row.segment<6>(12).transpose();
    s.rhand_pos = row.segment<3>(18).transpose();
    s.rhand_rot6d = row.segment<6>(21).transpose();
    return s;
}

Normalizer Normalizer::fit(const Matrix& rows, double min_scale) {
    if (rows.rows() == 0) throw DataError(DataErrc::invalid_argument, "cannot fit normalizer on no rows");
    Normalizer n;
    n.mean_ = rows.colwise().mean();
    const Matrix centered = rows.rowwise() - n.mean_;
    n.scale_ = (centered.array().square().colwise().sum() / static_cast<double>(rows.rows())).sqrt().matrix();
    for (Eigen::Index i = 0; i < n.scale_.cols(); ++i) n.scale_(i) = std::max(n.scale_(i), min_scale);
    return n;
}

Matrix Normalizer::apply(const Matrix& rows) const {
    return ((rows.rowwise() - mean_).array().rowwise() / scale_.array()).matrix();
}

Matrix Normalizer::invert(const Matrix& rows) const {
    return ((rows.array().rowwise() * scale_.array()).rowwise() + mean_.array()).matrix();
}

void Normalizer::save(nn::Archive& ar, const std::string& name) const {
    ar.tensors[name + ".mean"] = mean_;
    ar.tensors[name + ".scale"] = scale_;
}

Normalizer Normalizer::load(const nn::Archive& ar, const std::string& name) {
    Normalizer n;
    n.mean_ = ar.tensor(name + ".mean");
    n.scale_ = ar.tensor(name + ".scale");
    return n;
}

Matrix group_rows(const Matrix& rows, int group) {
    if (group <= 0 || rows.rows() % group != 0) throw DataError(DataErrc::invalid_argument, "row count not divisible by group");
    return Eigen::Map<const Matrix>(rows.data(), rows.rows() / group, rows.cols() * group);
}

Matrix ungroup_rows(const Matrix& rows, int group) {
    if (group <= 0 || rows.cols() % group != 0) throw DataError(DataErrc::invalid_argument, "col count not divisible by group");
    return Eigen::Map<const Matrix>(rows.data(), rows.rows() * group, rows.cols() / group);
}

}  // namespace r2r::model
