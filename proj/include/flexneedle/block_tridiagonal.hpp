#pragma once

#include <cassert>
#include <vector>

#include <Eigen/Dense>

namespace flexneedle {

/// Block-tridiagonal matrix with square blocks of size B.
///
/// Row i holds lower(i) = A(i, i-1), diag(i) = A(i, i) and upper(i) = A(i, i+1);
/// lower(0) and upper(n-1) are unused.
template <typename Scalar, int B>
class BlockTridiagonal {
public:
    using Block = Eigen::Matrix<Scalar, B, B>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    explicit BlockTridiagonal(int block_rows = 0) { resize(block_rows); }

    void resize(int block_rows)
    {
        diag_.assign(block_rows, Block::Zero());
        lower_.assign(block_rows, Block::Zero());
        upper_.assign(block_rows, Block::Zero());
    }

    void set_zero()
    {
        for (auto* v : {&diag_, &lower_, &upper_})
            for (auto& b : *v) b.setZero();
    }

    int block_rows() const { return static_cast<int>(diag_.size()); }

    Block& diag(int i) { return diag_[i]; }
    Block& lower(int i) { return lower_[i]; }
    Block& upper(int i) { return upper_[i]; }
    const Block& diag(int i) const { return diag_[i]; }
    const Block& lower(int i) const { return lower_[i]; }
    const Block& upper(int i) const { return upper_[i]; }

    /// Adds a 2B x 2B coupling matrix between block rows i and i+1.
    template <typename Derived>
    void add_pair(int i, const Eigen::MatrixBase<Derived>& k)
    {
        diag_[i] += k.template topLeftCorner<B, B>();
        upper_[i] += k.template topRightCorner<B, B>();
        lower_[i + 1] += k.template bottomLeftCorner<B, B>();
        diag_[i + 1] += k.template bottomRightCorner<B, B>();
    }

    /// Replaces scalar row/column `dof` with the identity (prescribed unknown).
    void pin(int dof)
    {
        const int bi = dof / B, r = dof % B;
        diag_[bi].row(r).setZero();
        diag_[bi].col(r).setZero();
        diag_[bi](r, r) = Scalar(1);
        if (bi > 0) {
            lower_[bi].row(r).setZero();
            upper_[bi - 1].col(r).setZero();
        }
        if (bi + 1 < block_rows()) {
            upper_[bi].row(r).setZero();
            lower_[bi + 1].col(r).setZero();
        }
    }

    Vector multiply(const Vector& x) const
    {
        const int n = block_rows();
        Vector y = Vector::Zero(n * B);
        for (int i = 0; i < n; ++i) {
            y.template segment<B>(i * B) += diag_[i] * x.template segment<B>(i * B);
            if (i > 0) y.template segment<B>(i * B) += lower_[i] * x.template segment<B>((i - 1) * B);
            if (i + 1 < n) y.template segment<B>(i * B) += upper_[i] * x.template segment<B>((i + 1) * B);
        }
        return y;
    }

    /// Block Thomas elimination. Returns false if a pivot block is singular.
    bool solve(const Vector& rhs, Vector& x) const
    {
        const int n = block_rows();
        assert(rhs.size() == n * B);
        std::vector<Eigen::PartialPivLU<Block>> pivots;
        pivots.reserve(n);
        std::vector<Block> c(n);
        std::vector<Eigen::Matrix<Scalar, B, 1>> d(n);

        Block dprime = diag_[0];
        Eigen::Matrix<Scalar, B, 1> r = rhs.template segment<B>(0);
        for (int i = 0; i < n; ++i) {
            if (i > 0) {
                dprime = diag_[i] - lower_[i] * c[i - 1];
                r = rhs.template segment<B>(i * B) - lower_[i] * d[i - 1];
            }
            pivots.emplace_back(dprime);
            using std::abs;
            if (!(abs(pivots.back().determinant()) > Scalar(0))) return false;
            if (i + 1 < n) c[i] = pivots.back().solve(upper_[i]);
            d[i] = pivots.back().solve(r);
        }
        x.resize(n * B);
        x.template segment<B>((n - 1) * B) = d[n - 1];
        for (int i = n - 2; i >= 0; --i)
            x.template segment<B>(i * B) = d[i] - c[i] * x.template segment<B>((i + 1) * B);
        return x.allFinite();
    }

private:
    std::vector<Block> diag_, lower_, upper_;
};

}  // namespace flexneedle
