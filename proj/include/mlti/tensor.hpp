#pragma once

//
// fourth-order tensors with Einstein-product algebra
//
// A tensor X in R^{d1 x d2 x d3 x d4} is stored through its unfolding: the
// (d1*d2) x (d3*d4) matrix that maps element (i1,i2,i3,i4) to row i1 + i2*d1
// and column i3 + i4*d3 (0-based, first index fastest). Storage is the
// unfolding itself (column-major dense, or compressed sparse), so folding and
// unfolding are reshapes and the Einstein product is a matrix product of
// unfoldings.
//

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mlti {

using Index = Eigen::Index;

template <typename Scalar>
using DenseMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using SparseMat = Eigen::SparseMatrix<Scalar>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// incompatible extents
struct DimensionError : Error {
    using Error::Error;
};
// operator factorization hit (numerical) singularity
struct SingularError : Error {
    using Error::Error;
};
// rank deficiency where full rank is required (QR breakdown and friends)
struct RankError : Error {
    using Error::Error;
};
// projected equation has no unique solution (eigenvalue pair product ~ 1)
struct UniquenessError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

//
// extents (d1,d2,d3,d4); rows/cols refer to the unfolding
//
struct Dims4 {
    Index d1 = 0, d2 = 0, d3 = 0, d4 = 0;

    Index rows() const { return d1 * d2; }
    Index cols() const { return d3 * d4; }
    Index count() const { return rows() * cols(); }
    bool square() const { return d1 == d3 && d2 == d4; }
    Dims4 transposed() const { return {d3, d4, d1, d2}; }
    bool operator==(const Dims4&) const = default;

    std::string str() const
    {
        return "(" + std::to_string(d1) + "," + std::to_string(d2) + "," + std::to_string(d3) + "," +
               std::to_string(d4) + ")";
    }
};

inline void check_valid(const Dims4& d)
{
    if (d.d1 < 1 || d.d2 < 1 || d.d3 < 1 || d.d4 < 1)
        throw DimensionError("tensor extents must all be >= 1, got " + d.str());
}

// one sparse entry, 0-based indices
template <typename Scalar>
struct Entry {
    Index i1, i2, i3, i4;
    Scalar v;
};

template <typename Scalar>
class Tensor4 {
public:
    using Dense = DenseMat<Scalar>;
    using Sparse = SparseMat<Scalar>;

    Tensor4() = default;

    static Tensor4 zeros(const Dims4& d)
    {
        check_valid(d);
        Tensor4 t;
        t.dims_ = d;
        t.dense_ = Dense::Zero(d.rows(), d.cols());
        return t;
    }

    // identity for the Einstein product on R^{k1 x k2}
    static Tensor4 identity(Index k1, Index k2)
    {
        Dims4 d{k1, k2, k1, k2};
        check_valid(d);
        Tensor4 t;
        t.dims_ = d;
        t.dense_ = Dense::Identity(d.rows(), d.cols());
        return t;
    }

    static Tensor4 from_unfolding(Dense m, const Dims4& d)
    {
        check_valid(d);
        if (m.rows() != d.rows() || m.cols() != d.cols())
            throw DimensionError("unfolding shape does not match extents " + d.str());
        Tensor4 t;
        t.dims_ = d;
        t.dense_ = std::move(m);
        return t;
    }

    static Tensor4 from_unfolding(Sparse m, const Dims4& d)
    {
        check_valid(d);
        if (m.rows() != d.rows() || m.cols() != d.cols())
            throw DimensionError("unfolding shape does not match extents " + d.str());
        Tensor4 t;
        t.dims_ = d;
        t.sparse_ = std::move(m);
        t.sparse_.makeCompressed();
        t.is_sparse_ = true;
        return t;
    }

    // sparse tensor from an entry list; rejects out-of-range and duplicate index quadruples
    static Tensor4 from_entries(const Dims4& d, const std::vector<Entry<Scalar>>& entries)
    {
        check_valid(d);
        std::vector<Eigen::Triplet<Scalar>> trip;
        trip.reserve(entries.size());
        for (const auto& e : entries) {
            if (e.i1 < 0 || e.i1 >= d.d1 || e.i2 < 0 || e.i2 >= d.d2 || e.i3 < 0 || e.i3 >= d.d3 || e.i4 < 0 ||
                e.i4 >= d.d4)
                throw DimensionError("sparse entry index out of range for extents " + d.str());
            trip.emplace_back(e.i1 + e.i2 * d.d1, e.i3 + e.i4 * d.d3, e.v);
        }
        Sparse m(d.rows(), d.cols());
        m.setFromTriplets(trip.begin(), trip.end(),
                          [](const Scalar&, const Scalar&) -> Scalar { throw IoError("duplicate sparse entry"); });
        m.makeCompressed();
        return from_unfolding(std::move(m), d);
    }

    const Dims4& dims() const { return dims_; }
    Index rows() const { return dims_.rows(); }
    Index cols() const { return dims_.cols(); }
    bool is_sparse() const { return is_sparse_; }
    bool empty() const { return dims_ == Dims4{}; }

    Scalar operator()(Index i1, Index i2, Index i3, Index i4) const
    {
        Index r = i1 + i2 * dims_.d1;
        Index c = i3 + i4 * dims_.d3;
        return is_sparse_ ? sparse_.coeff(r, c) : dense_(r, c);
    }

    const Dense& dense_unfolding() const
    {
        if (is_sparse_) throw Error("tensor is sparse, dense unfolding view unavailable");
        return dense_;
    }

    const Sparse& sparse_unfolding() const
    {
        if (!is_sparse_) throw Error("tensor is dense, sparse unfolding view unavailable");
        return sparse_;
    }

    // materialized dense unfolding, either storage
    Dense unfolding() const
    {
        if (!is_sparse_) return dense_;
        if (dims_.count() > Index(100'000'000)) throw Error("refusing to densify " + dims_.str());
        return Dense(sparse_);
    }

    Index nonzeros() const
    {
        if (is_sparse_) return sparse_.nonZeros();
        return (dense_.array() != Scalar(0)).count();
    }

    double norm() const { return is_sparse_ ? sparse_.norm() : dense_.norm(); }

private:
    Dims4 dims_;
    bool is_sparse_ = false;
    Dense dense_;
    Sparse sparse_;
};

using Tensor4d = Tensor4<double>;

// unfolding as an explicit dense matrix
template <typename S>
DenseMat<S> unfold(const Tensor4<S>& t)
{
    return t.unfolding();
}

template <typename S>
Tensor4<S> fold(DenseMat<S> m, const Dims4& d)
{
    return Tensor4<S>::from_unfolding(std::move(m), d);
}

template <typename S>
Tensor4<S> fold(SparseMat<S> m, const Dims4& d)
{
    return Tensor4<S>::from_unfolding(std::move(m), d);
}

}  // namespace mlti
