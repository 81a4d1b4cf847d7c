#pragma once

//
// factorizations of square tensors (LU-backed solves, inverse), tensor QR and
// SVD through the unfolding, and spectra.
//

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/SparseLU>

#include <cmath>
#include <memory>

#include "algebra.hpp"

namespace mlti {

//
// one-time LU factorization of a square tensor; all inverse applications in
// the algorithms go through solve(), never through an explicit inverse
//
template <typename S>
class FactorizedOp {
public:
    explicit FactorizedOp(const Tensor4<S>& a) : dims_(a.dims())
    {
        if (!dims_.square()) throw DimensionError("factorization needs a square tensor, got " + dims_.str());
        if (a.is_sparse()) {
            mat_ = a.sparse_unfolding();
            slu_ = std::make_unique<Eigen::SparseLU<SparseMat<S>>>();
            slu_->compute(mat_);
            if (slu_->info() != Eigen::Success) throw SingularError("sparse LU factorization failed, operator singular");
        } else {
            dlu_ = std::make_unique<Eigen::FullPivLU<DenseMat<S>>>(a.dense_unfolding());
            if (!dlu_->isInvertible()) throw SingularError("operator unfolding is singular");
        }
    }

    const Dims4& dims() const { return dims_; }

    DenseMat<S> solve(const DenseMat<S>& b) const
    {
        if (b.rows() != dims_.rows()) throw DimensionError("solve: right-hand side row count mismatch");
        return slu_ ? DenseMat<S>(slu_->solve(b)) : DenseMat<S>(dlu_->solve(b));
    }

    // A' * X = B
    DenseMat<S> solve_transposed(const DenseMat<S>& b) const
    {
        if (b.rows() != dims_.rows()) throw DimensionError("solve: right-hand side row count mismatch");
        return slu_ ? DenseMat<S>(slu_->transpose().solve(b)) : DenseMat<S>(dlu_->transpose().solve(b));
    }

    Tensor4<S> solve(const Tensor4<S>& b) const
    {
        if (b.dims().d1 != dims_.d3 || b.dims().d2 != dims_.d4)
            throw DimensionError("solve: leading extents of rhs must match operator");
        return fold(solve(b.unfolding()), Dims4{dims_.d1, dims_.d2, b.dims().d3, b.dims().d4});
    }

private:
    Dims4 dims_;
    SparseMat<S> mat_;
    std::unique_ptr<Eigen::SparseLU<SparseMat<S>>> slu_;
    std::unique_ptr<Eigen::FullPivLU<DenseMat<S>>> dlu_;
};

// explicit Einstein-product inverse; prefer FactorizedOp::solve in algorithms
template <typename S>
Tensor4<S> inverse(const Tensor4<S>& a)
{
    FactorizedOp<S> f(a);
    return fold(f.solve(DenseMat<S>::Identity(a.rows(), a.cols())), a.dims().transposed());
}

template <typename S>
struct TensorQR {
    Tensor4<S> q;  // same extents as the input, orthonormal columns under unfolding
    Tensor4<S> r;  // square trailing-extent tensor, upper triangular unfolding
};

// thin Householder QR of the unfolding with nonnegative R diagonal; throws
// RankError when a diagonal entry falls below 1e-12 times the input norm
template <typename S>
TensorQR<S> tensor_qr(const Tensor4<S>& w)
{
    const Dims4 d = w.dims();
    if (d.rows() < d.cols()) throw DimensionError("tensor_qr needs unfolding rows >= cols, got " + d.str());
    DenseMat<S> m = w.unfolding();
    const double ref = m.norm();
    if (ref == 0.0) throw RankError("tensor_qr input is zero");
    Eigen::HouseholderQR<DenseMat<S>> qr(m);
    DenseMat<S> q = qr.householderQ() * DenseMat<S>::Identity(d.rows(), d.cols());
    DenseMat<S> r = DenseMat<S>(qr.matrixQR().topRows(d.cols())).template triangularView<Eigen::Upper>();
    for (Index i = 0; i < d.cols(); ++i) {
        if (r(i, i) < S(0)) {
            r.row(i) = -r.row(i);
            q.col(i) = -q.col(i);
        }
    }
    for (Index i = 0; i < d.cols(); ++i)
        if (std::abs(r(i, i)) <= 1e-12 * ref) throw RankError("rank-deficient input to tensor_qr");
    return {fold(std::move(q), d), fold(std::move(r), Dims4{d.d3, d.d4, d.d3, d.d4})};
}

template <typename S>
struct TensorSVD {
    Tensor4<S> u;  // (d1,d2,d1,d2)
    Tensor4<S> s;  // (d1,d2,d3,d4), diagonal unfolding, non-increasing values
    Tensor4<S> v;  // (d3,d4,d3,d4)
};

template <typename S>
TensorSVD<S> tensor_svd(const Tensor4<S>& x)
{
    const Dims4 d = x.dims();
    Eigen::BDCSVD<DenseMat<S>> svd(x.unfolding(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    DenseMat<S> s = DenseMat<S>::Zero(d.rows(), d.cols());
    s.diagonal().head(svd.singularValues().size()) = svd.singularValues();
    return {fold(DenseMat<S>(svd.matrixU()), Dims4{d.d1, d.d2, d.d1, d.d2}), fold(std::move(s), d),
            fold(DenseMat<S>(svd.matrixV()), Dims4{d.d3, d.d4, d.d3, d.d4})};
}

// whether the unfolding has no entries below the diagonal (cheap for sparse)
template <typename S>
bool unfolding_is_triangular(const Tensor4<S>& t)
{
    if (!t.dims().square()) return false;
    if (t.is_sparse()) {
        const auto& m = t.sparse_unfolding();
        for (Index c = 0; c < m.outerSize(); ++c)
            for (typename SparseMat<S>::InnerIterator it(m, c); it; ++it)
                if (it.row() > it.col() && it.value() != S(0)) return false;
        return true;
    }
    const auto& m = t.dense_unfolding();
    for (Index c = 0; c < m.cols(); ++c)
        for (Index r = c + 1; r < m.rows(); ++r)
            if (m(r, c) != S(0)) return false;
    return true;
}

// eigenvalues of the unfolding; diagonal read-off on triangular operators,
// dense solver otherwise (desk scale)
template <typename S>
Eigen::VectorXcd spectrum(const Tensor4<S>& t)
{
    if (!t.dims().square()) throw DimensionError("spectrum needs a square tensor");
    const Index n = t.rows();
    if (unfolding_is_triangular(t)) {
        Eigen::VectorXcd ev(n);
        for (Index i = 0; i < n; ++i)
            ev(i) = std::complex<double>(double(t.is_sparse() ? t.sparse_unfolding().coeff(i, i)
                                                              : t.dense_unfolding()(i, i)),
                                         0.0);
        return ev;
    }
    Eigen::EigenSolver<DenseMat<S>> es(t.unfolding(), false);
    if (es.info() != Eigen::Success) throw Error("dense eigenvalue iteration failed");
    return es.eigenvalues();
}

template <typename S>
double spectral_radius(const Tensor4<S>& t)
{
    return spectrum(t).cwiseAbs().maxCoeff();
}

// largest singular value of the unfolding by power iteration on A'A;
// deterministic start and iteration count, used to rescale big operators
// where an exact spectral radius is not affordable
template <typename S>
double sigma_max_estimate(const Tensor4<S>& t, int iters = 200)
{
    const Index n = t.cols();
    DenseVec<S> v = DenseVec<S>::Ones(n) / std::sqrt(double(n));
    double sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
        DenseVec<S> w, u;
        if (t.is_sparse()) {
            w = t.sparse_unfolding() * v;
            u = t.sparse_unfolding().transpose() * w;
        } else {
            w = t.dense_unfolding() * v;
            u = t.dense_unfolding().transpose() * w;
        }
        sigma = std::sqrt(w.squaredNorm());
        const double un = u.norm();
        if (un == 0.0) return 0.0;
        v = u / un;
    }
    return sigma;
}

}  // namespace mlti
