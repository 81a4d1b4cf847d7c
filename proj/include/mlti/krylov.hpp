#pragma once

//
// Krylov processes for square operators under the Einstein product.
//
// Four processes over the same skeleton: classic/extended, slab-inner-product
// ("global") or block orthogonalization. Bases are kept as unfolding matrices
// whose columns group into slabs of width u = k1*k2; the global flavors
// orthogonalize against whole slabs with the trace inner product, the block
// flavors against all basis columns. Every Gram-Schmidt sweep runs one
// reorthogonalization pass. A direction whose post-orthogonalization norm
// falls below 1e-12 times its norm before orthogonalization is declared
// dependent; the process then stops early and flags the decomposition.
//

#include "decompositions.hpp"

namespace mlti {

namespace detail {

inline constexpr double kDependenceTol = 1e-12;

}  // namespace detail

//
// classic process, slab inner products: A * V_m = V_{m+1} * kron_lift(Hbar, I)
//
template <typename S>
struct GlobalDecomp {
    Tensor4<S> basis;   // (n1,n2,k1,s*k2) with s = steps+1, or steps on breakdown
    DenseMat<S> hbar;   // (steps+1) x steps upper Hessenberg, last row zero on breakdown
    int steps = 0;      // completed Arnoldi steps
    Index slab_width = 0;
    bool breakdown = false;
};

//
// extended process, slab inner products; basis blocks pair a forward and an
// inverse direction, so block j spans slabs 2j-1 and 2j
//
template <typename S>
struct ExtendedGlobalDecomp {
    Tensor4<S> basis;            // slabs 2*(steps+1) wide, or 2*steps... see breakdown note
    DenseMat<S> hbar;            // 2(steps+1) x 2*steps with 2x2 upper-triangular subdiagonal blocks
    Eigen::Matrix<S, 2, 2> omega;  // coefficients of the initial pair against V_1
    int steps = 0;               // completed pair extensions beyond V_1
    Index slab_width = 0;
    bool breakdown = false;
};

//
// block processes: A * V_m = V_{m+1} * Tbar with tensor-valued coefficients
//
template <typename S>
struct BlockDecomp {
    Tensor4<S> basis;       // blocks of mode-4 width block_width
    Tensor4<S> hbar;        // orthogonalization coefficients, block Hessenberg
    Tensor4<S> tbar;        // projection of A onto the basis (equals hbar for the classic process)
    Tensor4<S> r0;          // triangular factor of the initial block
    int steps = 0;
    Index slab_width = 0;   // k2
    Index block_width = 0;  // k2 for classic, 2*k2 for extended
    bool breakdown = false;
};

namespace detail {

template <typename S>
void require_operator_pair(const Tensor4<S>& a, const Tensor4<S>& b)
{
    if (!a.dims().square()) throw DimensionError("Krylov process needs a square operator, got " + a.dims().str());
    if (b.dims().d1 != a.dims().d1 || b.dims().d2 != a.dims().d2)
        throw DimensionError("right-hand side extents " + b.dims().str() + " do not match operator " + a.dims().str());
}

//
// classic global builder
//
template <typename S>
class GlobalBuilder {
public:
    GlobalBuilder(const Tensor4<S>& a, const Tensor4<S>& b) : a_(a), u_(b.dims().d3 * b.dims().d4), bdims_(b.dims())
    {
        require_operator_pair(a, b);
        DenseMat<S> b0 = b.unfolding();
        beta_ = b0.norm();
        if (beta_ == 0.0) throw RankError("zero right-hand side");
        basis_ = b0 / beta_;
    }

    // true if a new slab was appended
    bool advance()
    {
        if (breakdown_) return false;
        const Index n = basis_.rows();
        const int j = slabs();
        DenseMat<S> w = apply(a_, basis_.rightCols(u_));
        const double ref = w.norm();
        Eigen::Map<const DenseMat<S>> bv(basis_.data(), n * u_, j);
        Eigen::Map<DenseVec<S>> wv(w.data(), n * u_);
        DenseVec<S> h = DenseVec<S>::Zero(j);
        for (int pass = 0; pass < 2; ++pass) {
            DenseVec<S> c = bv.transpose() * wv;
            wv.noalias() -= bv * c;
            h += c;
        }
        const double hnext = w.norm();
        hcols_.push_back(h);
        hsub_.push_back(hnext);
        ++steps_;
        if (ref == 0.0 || hnext <= kDependenceTol * ref) {
            hsub_.back() = 0.0;
            breakdown_ = true;
            return false;
        }
        basis_.conservativeResize(Eigen::NoChange, (j + 1) * u_);
        basis_.rightCols(u_) = w / hnext;
        return true;
    }

    int steps() const { return steps_; }
    int slabs() const { return int(basis_.cols() / u_); }
    bool breakdown() const { return breakdown_; }
    double beta() const { return beta_; }
    const DenseMat<S>& basis_unfolding() const { return basis_; }

    DenseMat<S> hbar() const
    {
        DenseMat<S> h = DenseMat<S>::Zero(steps_ + 1, steps_);
        for (int c = 0; c < steps_; ++c) {
            h.col(c).head(c + 1) = hcols_[c];
            h(c + 1, c) = hsub_[c];
        }
        return h;
    }

    GlobalDecomp<S> decomp() const
    {
        GlobalDecomp<S> d;
        d.basis = fold(DenseMat<S>(basis_), Dims4{bdims_.d1, bdims_.d2, bdims_.d3, bdims_.d4 * slabs()});
        d.hbar = hbar();
        d.steps = steps_;
        d.slab_width = bdims_.d4;
        d.breakdown = breakdown_;
        return d;
    }

private:
    const Tensor4<S>& a_;
    Index u_;
    Dims4 bdims_;
    double beta_ = 0;
    DenseMat<S> basis_;
    std::vector<DenseVec<S>> hcols_;
    std::vector<double> hsub_;
    int steps_ = 0;
    bool breakdown_ = false;
};

// slab-wise Gram-Schmidt of a two-slab group; returns false (and the index of
// the failing slab) when a slab is dependent at tolerance ref
template <typename S>
bool pair_qr(DenseMat<S>& w, Index u, double ref, Eigen::Matrix<S, 2, 2>& r)
{
    r.setZero();
    auto s0 = w.leftCols(u), s1 = w.rightCols(u);
    const double r00 = s0.norm();
    if (r00 <= kDependenceTol * ref) return false;
    s0 /= r00;
    r(0, 0) = r00;
    S c = s0.cwiseProduct(s1).sum();
    s1 -= c * s0;
    S c2 = s0.cwiseProduct(s1).sum();
    s1 -= c2 * s0;
    r(0, 1) = c + c2;
    const double r11 = s1.norm();
    if (r11 <= kDependenceTol * ref) return false;
    s1 /= r11;
    r(1, 1) = r11;
    return true;
}

//
// extended global builder; owns the LU factorization of the operator
//
template <typename S>
class ExtendedGlobalBuilder {
public:
    ExtendedGlobalBuilder(const Tensor4<S>& a, const Tensor4<S>& b)
        : a_(a), fac_(a), u_(b.dims().d3 * b.dims().d4), bdims_(b.dims())
    {
        require_operator_pair(a, b);
        DenseMat<S> b0 = b.unfolding();
        DenseMat<S> pair(b0.rows(), 2 * u_);
        pair.leftCols(u_) = b0;
        pair.rightCols(u_) = fac_.solve(b0);
        const double ref = pair.norm();
        if (ref == 0.0) throw RankError("zero right-hand side");
        if (!pair_qr(pair, u_, ref, omega_)) {
            // degenerate initial pair, e.g. the identity operator: keep the
            // normalized first slab so callers still see an orthonormal basis
            const double b0n = b0.norm();
            if (b0n == 0.0) throw RankError("zero right-hand side");
            basis_ = b0 / b0n;
            omega_(0, 0) = b0n;
            breakdown_ = true;
            return;
        }
        basis_ = pair;
    }

    bool advance()
    {
        if (breakdown_) return false;
        const Index n = basis_.rows();
        const int j = blocks();
        DenseMat<S> w(n, 2 * u_);
        w.leftCols(u_) = apply(a_, basis_.middleCols((j - 1) * 2 * u_, u_));
        w.rightCols(u_) = fac_.solve(basis_.middleCols((j - 1) * 2 * u_ + u_, u_));
        const double ref = w.norm();
        Eigen::Map<const DenseMat<S>> bv(basis_.data(), n * u_, 2 * j);
        Eigen::Map<DenseMat<S>> wv(w.data(), n * u_, 2);
        DenseMat<S> h = DenseMat<S>::Zero(2 * j, 2);
        for (int pass = 0; pass < 2; ++pass) {
            DenseMat<S> c = bv.transpose() * wv;
            wv.noalias() -= bv * c;
            h += c;
        }
        Eigen::Matrix<S, 2, 2> r;
        if (ref == 0.0 || !pair_qr(w, u_, ref, r)) {
            breakdown_ = true;
            return false;
        }
        DenseMat<S> hcol(2 * j + 2, 2);
        hcol.topRows(2 * j) = h;
        hcol.bottomRows(2) = r;
        hcols_.push_back(std::move(hcol));
        ++steps_;
        basis_.conservativeResize(Eigen::NoChange, (j + 1) * 2 * u_);
        basis_.rightCols(2 * u_) = w;
        return true;
    }

    int steps() const { return steps_; }
    int blocks() const { return int(basis_.cols() / (2 * u_)); }
    bool breakdown() const { return breakdown_; }
    const Eigen::Matrix<S, 2, 2>& omega() const { return omega_; }
    const DenseMat<S>& basis_unfolding() const { return basis_; }
    const FactorizedOp<S>& factorization() const { return fac_; }

    DenseMat<S> hbar() const
    {
        DenseMat<S> h = DenseMat<S>::Zero(2 * (steps_ + 1), 2 * steps_);
        for (int c = 0; c < steps_; ++c) h.block(0, 2 * c, 2 * c + 4, 2) = hcols_[c];
        return h;
    }

    ExtendedGlobalDecomp<S> decomp() const
    {
        ExtendedGlobalDecomp<S> d;
        d.basis = fold(DenseMat<S>(basis_), Dims4{bdims_.d1, bdims_.d2, bdims_.d3, Index(basis_.cols() / bdims_.d3)});
        d.hbar = hbar();
        d.omega = omega_;
        d.steps = steps_;
        d.slab_width = bdims_.d4;
        d.breakdown = breakdown_;
        return d;
    }

private:
    const Tensor4<S>& a_;
    FactorizedOp<S> fac_;
    Index u_;
    Dims4 bdims_;
    Eigen::Matrix<S, 2, 2> omega_ = Eigen::Matrix<S, 2, 2>::Zero();
    DenseMat<S> basis_;
    std::vector<DenseMat<S>> hcols_;  // hcols_[c] is the 2(c+2) x 2 column block c
    int steps_ = 0;
    bool breakdown_ = false;
};

//
// block builder covering the classic (forward-only) and extended variants
//
template <typename S>
class BlockBuilder {
public:
    BlockBuilder(const Tensor4<S>& a, const Tensor4<S>& b, bool extended)
        : a_(a), u_(b.dims().d3 * b.dims().d4), bdims_(b.dims()), extended_(extended)
    {
        require_operator_pair(a, b);
        if (extended_) fac_ = std::make_unique<FactorizedOp<S>>(a);
        bw_ = extended_ ? 2 * u_ : u_;
        DenseMat<S> b0 = b.unfolding();
        DenseMat<S> s0;
        if (extended_) {
            s0.resize(b0.rows(), 2 * u_);
            s0.leftCols(u_) = b0;
            s0.rightCols(u_) = fac_->solve(b0);
        } else {
            s0 = std::move(b0);
        }
        Dims4 sd{bdims_.d1, bdims_.d2, bdims_.d3, bw_ / bdims_.d3};
        try {
            auto qr = tensor_qr(fold(std::move(s0), sd));
            basis_ = qr.q.dense_unfolding();
            r0_ = qr.r.dense_unfolding();
        } catch (const RankError&) {
            breakdown_ = true;  // degenerate initial block, empty decomposition
        }
    }

    bool advance()
    {
        if (breakdown_) return false;
        const Index n = basis_.rows();
        const int j = blocks();
        DenseMat<S> w(n, bw_);
        if (extended_) {
            w.leftCols(u_) = apply(a_, basis_.middleCols((j - 1) * bw_, u_));
            w.rightCols(u_) = fac_->solve(basis_.middleCols((j - 1) * bw_ + u_, u_));
        } else {
            w = apply(a_, basis_.rightCols(bw_));
        }
        const double ref = w.norm();
        DenseMat<S> h = DenseMat<S>::Zero(j * bw_, bw_);
        for (int pass = 0; pass < 2; ++pass) {
            DenseMat<S> c = basis_.transpose() * w;
            w.noalias() -= basis_ * c;
            h += c;
        }
        DenseMat<S> q, r;
        if (ref == 0.0 || !dense_qr(w, ref, q, r)) {
            breakdown_ = true;
            return false;
        }
        DenseMat<S> hcol((j + 1) * bw_, bw_);
        hcol.topRows(j * bw_) = h;
        hcol.bottomRows(bw_) = r;
        hcols_.push_back(std::move(hcol));
        ++steps_;
        basis_.conservativeResize(Eigen::NoChange, (j + 1) * bw_);
        basis_.rightCols(bw_) = q;
        return true;
    }

    int steps() const { return steps_; }
    int blocks() const { return breakdown_ && basis_.size() == 0 ? 0 : int(basis_.cols() / bw_); }
    bool breakdown() const { return breakdown_; }
    Index block_cols() const { return bw_; }
    const DenseMat<S>& basis_unfolding() const { return basis_; }
    const DenseMat<S>& r0() const { return r0_; }
    const FactorizedOp<S>* factorization() const { return fac_.get(); }

    DenseMat<S> hbar() const
    {
        DenseMat<S> h = DenseMat<S>::Zero((steps_ + 1) * bw_, steps_ * bw_);
        for (int c = 0; c < steps_; ++c) h.block(0, c * bw_, (c + 2) * bw_, bw_) = hcols_[c];
        return h;
    }

    // projection of A onto the basis: equals hbar for the classic variant,
    // recovered from the recurrence for the extended one (with a fallback to
    // explicit products when a recursion pivot degenerates)
    DenseMat<S> tbar() const
    {
        DenseMat<S> h = hbar();
        if (!extended_) return h;
        try {
            return extended_projection_from(h);
        } catch (const RankError&) {
            const Index cols = steps_ * bw_;
            DenseMat<S> av = apply(a_, basis_.leftCols(cols));
            return basis_.transpose() * av;
        }
    }

    BlockDecomp<S> decomp() const
    {
        BlockDecomp<S> d;
        d.steps = steps_;
        d.slab_width = bdims_.d4;
        d.block_width = bw_ / bdims_.d3;
        d.breakdown = breakdown_;
        if (blocks() == 0) return d;
        const Index k1 = bdims_.d3;
        d.basis = fold(DenseMat<S>(basis_), Dims4{bdims_.d1, bdims_.d2, k1, basis_.cols() / k1});
        d.r0 = fold(DenseMat<S>(r0_), Dims4{k1, bw_ / k1, k1, bw_ / k1});
        if (steps_ > 0) {
            DenseMat<S> h = hbar();
            Dims4 hd{k1, (steps_ + 1) * bw_ / k1, k1, steps_ * bw_ / k1};
            d.hbar = fold(DenseMat<S>(h), hd);
            d.tbar = extended_ ? fold(tbar(), hd) : d.hbar;
        }
        return d;
    }

private:
    // QR of a block with nonnegative diagonal; false on rank deficiency
    static bool dense_qr(DenseMat<S>& w, double ref, DenseMat<S>& q, DenseMat<S>& r)
    {
        Eigen::HouseholderQR<DenseMat<S>> qr(w);
        q = qr.householderQ() * DenseMat<S>::Identity(w.rows(), w.cols());
        r = DenseMat<S>(qr.matrixQR().topRows(w.cols())).template triangularView<Eigen::Upper>();
        for (Index i = 0; i < w.cols(); ++i) {
            if (r(i, i) < S(0)) {
                r.row(i) = -r.row(i);
                q.col(i) = -q.col(i);
            }
            if (r(i, i) <= kDependenceTol * ref) return false;
        }
        return true;
    }

    // Tbar of the extended variant from stored coefficients: forward
    // sub-columns copy from hbar, inverse sub-columns come from the
    // recurrence against the preceding columns
    DenseMat<S> extended_projection_from(const DenseMat<S>& h) const
    {
        const Index rows = (steps_ + 1) * bw_, cols = steps_ * bw_;
        const double piv_ref = h.size() ? h.cwiseAbs().maxCoeff() : 0.0;
        DenseMat<S> t = DenseMat<S>::Zero(rows, cols);
        auto right_upper_solve = [&](DenseMat<S> y, const Eigen::Ref<const DenseMat<S>>& rr) {
            for (Index i = 0; i < rr.rows(); ++i)
                if (std::abs(rr(i, i)) <= kDependenceTol * piv_ref) throw RankError("projection recurrence pivot underflow");
            // y <- y * rr^{-1} for upper-triangular rr
            rr.template triangularView<Eigen::Upper>().transpose().solveInPlace(y.transpose());
            return y;
        };
        if (steps_ == 0) return t;
        t.middleCols(0, u_) = h.middleCols(0, u_);
        {
            DenseMat<S> e = DenseMat<S>::Zero(rows, u_);
            e.topRows(u_) = DenseMat<S>::Identity(u_, u_);
            DenseMat<S> y = e * r0_.topLeftCorner(u_, u_) - t.middleCols(0, u_) * r0_.block(0, u_, u_, u_);
            t.middleCols(u_, u_) = right_upper_solve(std::move(y), r0_.block(u_, u_, u_, u_));
        }
        for (int j = 1; j < steps_; ++j) {
            t.middleCols(2 * j * u_, u_) = h.middleCols(2 * j * u_, u_);
            DenseMat<S> e = DenseMat<S>::Zero(rows, u_);
            e.middleRows((2 * j - 1) * u_, u_) = DenseMat<S>::Identity(u_, u_);
            const Index known = (2 * j + 1) * u_;
            DenseMat<S> y = e - t.leftCols(known) * h.block(0, (2 * j - 1) * u_, known, u_);
            t.middleCols((2 * j + 1) * u_, u_) =
                right_upper_solve(std::move(y), h.block((2 * j + 1) * u_, (2 * j - 1) * u_, u_, u_));
        }
        return t;
    }

    const Tensor4<S>& a_;
    std::unique_ptr<FactorizedOp<S>> fac_;
    Index u_;
    Dims4 bdims_;
    bool extended_;
    Index bw_ = 0;
    DenseMat<S> basis_;
    DenseMat<S> r0_;
    std::vector<DenseMat<S>> hcols_;
    int steps_ = 0;
    bool breakdown_ = false;
};

}  // namespace detail

template <typename S>
GlobalDecomp<S> global_arnoldi(const Tensor4<S>& a, const Tensor4<S>& b, int m)
{
    detail::GlobalBuilder<S> builder(a, b);
    for (int j = 0; j < m && builder.advance(); ++j) {
    }
    return builder.decomp();
}

template <typename S>
ExtendedGlobalDecomp<S> extended_global_arnoldi(const Tensor4<S>& a, const Tensor4<S>& b, int m)
{
    detail::ExtendedGlobalBuilder<S> builder(a, b);
    for (int j = 0; j < m && builder.advance(); ++j) {
    }
    return builder.decomp();
}

template <typename S>
BlockDecomp<S> block_arnoldi(const Tensor4<S>& a, const Tensor4<S>& b, int m)
{
    detail::BlockBuilder<S> builder(a, b, false);
    for (int j = 0; j < m && builder.advance(); ++j) {
    }
    return builder.decomp();
}

template <typename S>
BlockDecomp<S> extended_block_arnoldi(const Tensor4<S>& a, const Tensor4<S>& b, int m)
{
    detail::BlockBuilder<S> builder(a, b, true);
    for (int j = 0; j < m && builder.advance(); ++j) {
    }
    return builder.decomp();
}

// projection of A onto the extended-global basis, recovered from the stored
// recurrence coefficients alone: forward columns copy from hbar, inverse
// columns follow from the two-term recurrence seeded by omega; throws
// RankError when a recurrence pivot degenerates (callers fall back to
// explicit slab projections)
template <typename S>
DenseMat<S> projected_operator(const ExtendedGlobalDecomp<S>& d)
{
    const int m = d.steps;
    const Index rows = 2 * (m + 1), cols = 2 * m;
    DenseMat<S> t = DenseMat<S>::Zero(rows, cols);
    if (m == 0) return t;
    const double piv_ref = std::max(d.hbar.cwiseAbs().maxCoeff(), d.omega.cwiseAbs().maxCoeff());
    auto pivot = [&](S p) {
        if (std::abs(p) <= detail::kDependenceTol * piv_ref) throw RankError("projection recurrence pivot underflow");
        return p;
    };
    t.col(0) = d.hbar.col(0);
    t.col(1) = (d.omega(0, 0) * DenseVec<S>::Unit(rows, 0) - d.omega(0, 1) * d.hbar.col(0)) / pivot(d.omega(1, 1));
    for (int j = 1; j < m; ++j) {
        t.col(2 * j) = d.hbar.col(2 * j);
        DenseVec<S> y = DenseVec<S>::Unit(rows, 2 * j - 1) - t.leftCols(2 * j + 1) * d.hbar.col(2 * j - 1).head(2 * j + 1);
        t.col(2 * j + 1) = y / pivot(d.hbar(2 * j + 1, 2 * j - 1));
    }
    return t;
}

}  // namespace mlti
