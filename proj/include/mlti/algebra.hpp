#pragma once

//
// free functions on fourth-order tensors: Einstein product, transpose, trace,
// inner product, Kronecker lift of coefficient matrices, slab Gram matrices,
// mode-4 concatenation/slicing and uniform block assembly.
//
// A "slab" is a contiguous mode-4 group of columns: tensors of shape
// (n1,n2,k1,p*k2) carry p slabs of width k2, and thanks to ivec ordering each
// slab occupies k1*k2 contiguous columns of the unfolding.
//

#include <type_traits>

#include "tensor.hpp"

namespace mlti {

namespace detail {

template <typename S>
void require_contractable(const Tensor4<S>& a, const Tensor4<S>& b)
{
    if (a.dims().d3 != b.dims().d1 || a.dims().d4 != b.dims().d2)
        throw DimensionError("Einstein product mismatch: " + a.dims().str() + " * " + b.dims().str());
}

}  // namespace detail

// Einstein product over the trailing pair of the left and leading pair of the
// right factor; sparsity is preserved only when both factors are sparse
template <typename S>
Tensor4<S> einstein(const Tensor4<S>& a, const Tensor4<S>& b)
{
    detail::require_contractable(a, b);
    Dims4 rd{a.dims().d1, a.dims().d2, b.dims().d3, b.dims().d4};
    if (a.is_sparse() && b.is_sparse()) {
        SparseMat<S> r = a.sparse_unfolding() * b.sparse_unfolding();
        return fold(std::move(r), rd);
    }
    DenseMat<S> r;
    if (a.is_sparse())
        r = a.sparse_unfolding() * b.dense_unfolding();
    else if (b.is_sparse())
        r = a.dense_unfolding() * b.sparse_unfolding();
    else
        r = a.dense_unfolding() * b.dense_unfolding();
    return fold(std::move(r), rd);
}

template <typename S>
Tensor4<S> transpose(const Tensor4<S>& t)
{
    if (t.is_sparse()) {
        SparseMat<S> m = t.sparse_unfolding().transpose();
        return fold(std::move(m), t.dims().transposed());
    }
    DenseMat<S> m = t.dense_unfolding().transpose();
    return fold(std::move(m), t.dims().transposed());
}

template <typename S>
S trace(const Tensor4<S>& t)
{
    if (!t.dims().square()) throw DimensionError("trace needs a square tensor, got " + t.dims().str());
    if (t.is_sparse()) {
        S acc{};
        for (Index i = 0; i < t.rows(); ++i) acc += t.sparse_unfolding().coeff(i, i);
        return acc;
    }
    return t.dense_unfolding().trace();
}

// Frobenius inner product <X,Y> = trace(X' * Y)
template <typename S>
S inner(const Tensor4<S>& x, const Tensor4<S>& y)
{
    if (!(x.dims() == y.dims())) throw DimensionError("inner product needs equal extents");
    if (!x.is_sparse() && !y.is_sparse())
        return x.dense_unfolding().cwiseProduct(y.dense_unfolding()).sum();
    if (x.is_sparse() && y.is_sparse())
        return x.sparse_unfolding().cwiseProduct(y.sparse_unfolding()).sum();
    const Tensor4<S>& sp = x.is_sparse() ? x : y;
    const Tensor4<S>& de = x.is_sparse() ? y : x;
    S acc{};
    const auto& m = sp.sparse_unfolding();
    for (Index c = 0; c < m.outerSize(); ++c)
        for (typename SparseMat<S>::InnerIterator it(m, c); it; ++it) acc += it.value() * de.dense_unfolding()(it.row(), it.col());
    return acc;
}

template <typename S>
double norm(const Tensor4<S>& t)
{
    return t.norm();
}

// lift of a p x q coefficient matrix against a square tensor J, the tensor
// whose diagonal mode-(1,3) slices are kron(P, J(i,:,i,:)); its unfolding is
// kron(P, unfold(J))
template <typename S>
Tensor4<S> kron_lift(const DenseMat<S>& p, const Tensor4<S>& j)
{
    if (!j.dims().square()) throw DimensionError("kron_lift needs a square tensor factor");
    const Index k1 = j.dims().d1, k2 = j.dims().d2;
    DenseMat<S> jm = j.unfolding();
    DenseMat<S> r(p.rows() * jm.rows(), p.cols() * jm.cols());
    for (Index i = 0; i < p.rows(); ++i)
        for (Index l = 0; l < p.cols(); ++l) r.block(i * jm.rows(), l * jm.cols(), jm.rows(), jm.cols()) = p(i, l) * jm;
    return fold(std::move(r), Dims4{k1, p.rows() * k2, k1, p.cols() * k2});
}

namespace detail {

// view the unfolding of (n1,n2,k1,p*k2) as an (n1*n2*k1*k2) x p matrix whose
// columns are vectorized slabs; valid because slabs are contiguous
template <typename S>
Eigen::Map<const DenseMat<S>> slab_columns(const DenseMat<S>& m, Index slab_cols)
{
    if (slab_cols < 1 || m.cols() % slab_cols != 0) throw DimensionError("column count not a multiple of slab width");
    return Eigen::Map<const DenseMat<S>>(m.data(), m.rows() * slab_cols, m.cols() / slab_cols);
}

template <typename S, typename Derived>
DenseMat<S> apply(const Tensor4<S>& a, const Eigen::MatrixBase<Derived>& m)
{
    return a.is_sparse() ? DenseMat<S>(a.sparse_unfolding() * m.derived()) : DenseMat<S>(a.dense_unfolding() * m.derived());
}

// columns of `coeff` recombine slabs of `basis`: returns the unfolding of
// basis * kron_lift(coeff, identity(u)) without forming the lift
template <typename DerivedV, typename DerivedC>
DenseMat<typename DerivedV::Scalar> slab_recombine(const Eigen::MatrixBase<DerivedV>& basis_in,
                                                   const Eigen::MatrixBase<DerivedC>& coeff_in, Index u)
{
    using S = typename DerivedV::Scalar;
    const Eigen::Ref<const DenseMat<S>> basis(basis_in.derived());
    const Eigen::Ref<const DenseMat<S>> coeff(coeff_in.derived());
    Eigen::Map<const DenseMat<S>> grouped(basis.data(), basis.rows() * u, basis.cols() / u);
    DenseMat<S> out = grouped * coeff;
    return Eigen::Map<const DenseMat<S>>(out.data(), basis.rows(), coeff.cols() * u);
}

}  // namespace detail

/// matrix of slab inner products: entry (i,j) = <V_i, W_j> for slabs of mode-4
// width slab_width; V (n1,n2,k1,p*k2), W (n1,n2,k1,q*k2) give a p x q result
template <typename S>
DenseMat<S> slab_gram(const Tensor4<S>& v, const Tensor4<S>& w, Index slab_width)
{
    if (v.dims().d1 != w.dims().d1 || v.dims().d2 != w.dims().d2 || v.dims().d3 != w.dims().d3)
        throw DimensionError("slab_gram needs matching leading extents");
    const Index cols = v.dims().d3 * slab_width;
    auto vc = detail::slab_columns(v.dense_unfolding(), cols);
    auto wc = detail::slab_columns(w.dense_unfolding(), cols);
    return vc.transpose() * wc;
}

template <typename S>
Tensor4<S> mode4_concat(const Tensor4<S>& a, const Tensor4<S>& b)
{
    const Dims4 da = a.dims(), db = b.dims();
    if (da.d1 != db.d1 || da.d2 != db.d2 || da.d3 != db.d3)
        throw DimensionError("mode-4 concat needs matching extents outside mode 4");
    DenseMat<S> m(da.rows(), da.cols() + db.cols());
    m << a.unfolding(), b.unfolding();
    return fold(std::move(m), Dims4{da.d1, da.d2, da.d3, da.d4 + db.d4});
}

// contiguous mode-4 range [start, start+count), 0-based
template <typename S>
Tensor4<S> mode4_slice(const Tensor4<S>& t, Index start, Index count)
{
    const Dims4 d = t.dims();
    if (start < 0 || count < 1 || start + count > d.d4) throw DimensionError("mode-4 slice out of range");
    DenseMat<S> m = t.unfolding().middleCols(start * d.d3, count * d.d3);
    return fold(std::move(m), Dims4{d.d1, d.d2, d.d3, count});
}

// assemble a grid of uniformly sized blocks; blocks[i][j] becomes the tensor
// M(:, i-th mode-2 group, :, j-th mode-4 group)
template <typename S>
Tensor4<S> block_assemble(const std::vector<std::vector<Tensor4<S>>>& blocks)
{
    if (blocks.empty() || blocks.front().empty()) throw DimensionError("block_assemble needs a nonempty grid");
    const Index p = Index(blocks.size());
    const Index q = Index(blocks.front().size());
    const Dims4 bd = blocks.front().front().dims();
    DenseMat<S> m(p * bd.rows(), q * bd.cols());
    for (Index i = 0; i < p; ++i) {
        if (Index(blocks[i].size()) != q) throw DimensionError("block_assemble grid is ragged");
        for (Index j = 0; j < q; ++j) {
            if (!(blocks[i][j].dims() == bd)) throw DimensionError("block_assemble needs uniform block extents");
            m.block(i * bd.rows(), j * bd.cols(), bd.rows(), bd.cols()) = blocks[i][j].unfolding();
        }
    }
    return fold(std::move(m), Dims4{bd.d1, p * bd.d2, bd.d3, q * bd.d4});
}

// block (i,j) of a tensor whose mode-2 extent is p*row_width and mode-4 extent
// q*col_width; inverse of block_assemble
template <typename S>
Tensor4<S> block_extract(const Tensor4<S>& t, Index i, Index j, Index row_width, Index col_width)
{
    const Dims4 d = t.dims();
    if (row_width < 1 || col_width < 1 || d.d2 % row_width != 0 || d.d4 % col_width != 0)
        throw DimensionError("block widths must divide mode-2/mode-4 extents");
    const Index p = d.d2 / row_width, q = d.d4 / col_width;
    if (i < 0 || i >= p || j < 0 || j >= q) throw DimensionError("block index out of range");
    DenseMat<S> m = t.unfolding().block(i * d.d1 * row_width, j * d.d3 * col_width, d.d1 * row_width, d.d3 * col_width);
    return fold(std::move(m), Dims4{d.d1, row_width, d.d3, col_width});
}

}  // namespace mlti
