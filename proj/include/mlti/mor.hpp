#pragma once

//
// transfer-function machinery and Krylov projection reduction
//
// The transfer function F(s) = C * (sI - A)^{-1} * B is evaluated on
// unfoldings with one complex factorization per frequency. Reduced models
// come in two realizations: "lifted" ones whose state operator is a small
// matrix expanded through kron_lift (classic and extended slab-orthogonal
// projections), and plain matrix triples (balanced truncation, generic
// projections). Both evaluate their transfer through the small matrices
// only.
//

#include <complex>
#include <limits>
#include <numbers>

#include "krylov.hpp"
#include "system.hpp"

namespace mlti {

namespace detail {

// factorization of (sI - unfold(A)), optionally of its transpose
template <typename S>
class ShiftedSolver {
    using C = std::complex<S>;

public:
    ShiftedSolver(const Tensor4<S>& a, C s, bool transposed = false)
    {
        const Index n = a.rows();
        if (a.is_sparse()) {
            std::vector<Eigen::Triplet<C>> trips;
            const auto& m = a.sparse_unfolding();
            trips.reserve(size_t(m.nonZeros()) + size_t(n));
            for (Index c = 0; c < m.outerSize(); ++c)
                for (typename SparseMat<S>::InnerIterator it(m, c); it; ++it) {
                    Index r = it.row(), cc = it.col();
                    if (transposed) std::swap(r, cc);
                    trips.emplace_back(int(r), int(cc), C(-it.value()));
                }
            for (Index i = 0; i < n; ++i) trips.emplace_back(int(i), int(i), s);
            SparseMat<C> sm(n, n);
            sm.setFromTriplets(trips.begin(), trips.end());
            sm.makeCompressed();
            sparse_ = std::make_unique<Eigen::SparseLU<SparseMat<C>>>();
            sparse_->compute(sm);
            if (sparse_->info() != Eigen::Success) throw SingularError("shifted operator is singular at this frequency");
        } else {
            DenseMat<C> dm = transposed ? DenseMat<C>((-a.dense_unfolding().transpose()).template cast<C>())
                                        : DenseMat<C>((-a.dense_unfolding()).template cast<C>());
            dm.diagonal().array() += s;
            dense_ = std::make_unique<Eigen::FullPivLU<DenseMat<C>>>(dm);
            if (!dense_->isInvertible()) throw SingularError("shifted operator is singular at this frequency");
        }
    }

    DenseMat<C> solve(const DenseMat<C>& rhs) const
    {
        return sparse_ ? DenseMat<C>(sparse_->solve(rhs)) : DenseMat<C>(dense_->solve(rhs));
    }

private:
    std::unique_ptr<Eigen::SparseLU<SparseMat<C>>> sparse_;
    std::unique_ptr<Eigen::FullPivLU<DenseMat<C>>> dense_;
};

}  // namespace detail

enum class RealizationKind { classic_global, extended_global, balanced_truncation, generic_projection };

template <typename S>
struct ReducedSystem {
    RealizationKind kind = RealizationKind::generic_projection;
    DenseMat<S> a_small;   // p x p projection of the state operator
    DenseVec<S> b_coeff;   // p, input coefficient through the lift (lifted kinds)
    DenseMat<S> b_small;   // p x k1*k2 projected input map (matrix kinds)
    Tensor4<S> c_out;      // output block: C * V for lifted kinds, folded C_r otherwise
    Index k1 = 0, k2 = 0;  // input extents
    int order = 0;         // p
    bool lifted = false;
    bool breakdown = false;  // the projection space closed before the requested order
    double h_next = 0;       // coupling to the discarded direction (classic slab projection)
    Tensor4<S> basis;        // orthonormal basis including the extra slab when one exists

    // equivalent tensor triple
    Tensor4<S> a_hat() const
    {
        if (lifted) return kron_lift(a_small, Tensor4<S>::identity(k1, k2));
        return fold(DenseMat<S>(a_small), Dims4{1, order, 1, order});
    }
    Tensor4<S> b_hat() const
    {
        if (lifted) return kron_lift(DenseMat<S>(b_coeff), Tensor4<S>::identity(k1, k2));
        return fold(DenseMat<S>(b_small), Dims4{1, order, k1, k2});
    }
    Tensor4<S> c_hat() const { return c_out; }
};

using ReducedSystemd = ReducedSystem<double>;

// unfolded transfer value Psi(F(s)) = Psi(C) * (sI - Psi(A))^{-1} * Psi(B)
template <typename S>
DenseMat<std::complex<S>> transfer_eval(const MLTISystem<S>& sys, std::complex<S> s)
{
    using C = std::complex<S>;
    sys.validate();
    detail::ShiftedSolver<S> solver(sys.a, s);
    DenseMat<C> x = solver.solve(sys.b.unfolding().template cast<C>());
    return sys.c.unfolding().template cast<C>() * x;
}

// reduced transfer value through the small realization
template <typename S>
DenseMat<std::complex<S>> transfer_eval(const ReducedSystem<S>& red, std::complex<S> s)
{
    using C = std::complex<S>;
    if (red.order < 1) throw RankError("empty reduced system");
    DenseMat<C> shifted = (-red.a_small).template cast<C>();
    shifted.diagonal().array() += s;
    Eigen::FullPivLU<DenseMat<C>> lu(shifted);
    if (!lu.isInvertible()) throw SingularError("shifted operator is singular at this frequency");
    const DenseMat<S> cmat = red.c_out.unfolding();
    if (red.lifted) {
        // F = Chat * kron(y, I_u) with y the small resolvent action
        const Index u = red.k1 * red.k2;
        DenseVec<C> y = lu.solve(red.b_coeff.template cast<C>());
        DenseMat<C> f = DenseMat<C>::Zero(cmat.rows(), u);
        for (int j = 0; j < red.order; ++j) f += y(j) * cmat.middleCols(Index(j) * u, u).template cast<C>();
        return f;
    }
    DenseMat<C> x = lu.solve(red.b_small.template cast<C>());
    return cmat.template cast<C>() * x;
}

// order-m reduction from the forward slab-orthogonal process; on breakdown
// the model is exact and comes back with a smaller order and the flag set
template <typename S>
ReducedSystem<S> reduce_classic_global(const MLTISystem<S>& sys, int m)
{
    sys.validate();
    if (m < 1) throw DimensionError("reduction order must be positive");
    GlobalDecomp<S> d = global_arnoldi(sys.a, sys.b, m);
    ReducedSystem<S> red;
    red.kind = RealizationKind::classic_global;
    red.lifted = true;
    red.k1 = sys.b.dims().d3;
    red.k2 = sys.b.dims().d4;
    red.order = d.steps;
    red.breakdown = d.breakdown;
    red.a_small = d.hbar.topRows(d.steps);
    red.h_next = d.breakdown ? 0.0 : d.hbar(d.steps, d.steps - 1);
    red.b_coeff = DenseVec<S>::Zero(d.steps);
    red.b_coeff(0) = norm(sys.b);
    red.c_out = einstein(sys.c, mode4_slice(d.basis, 0, Index(d.steps) * red.k2));
    red.basis = std::move(d.basis);
    return red;
}

// order-2m reduction from the forward/inverse slab-orthogonal process
template <typename S>
ReducedSystem<S> reduce_extended_global(const MLTISystem<S>& sys, int m)
{
    sys.validate();
    if (m < 1) throw DimensionError("reduction order must be positive");
    detail::ExtendedGlobalBuilder<S> builder(sys.a, sys.b);
    for (int j = 0; j < m && builder.advance(); ++j) {
    }
    ExtendedGlobalDecomp<S> d = builder.decomp();
    if (d.steps == 0) throw RankError("extended pair is degenerate at the first step");
    const Index u = sys.b.dims().d3 * sys.b.dims().d4;
    DenseMat<S> t;
    try {
        t = projected_operator(d);
    } catch (const RankError&) {
        // recurrence pivot underflow: project explicitly instead
        const DenseMat<S>& bm = builder.basis_unfolding();
        DenseMat<S> av = detail::apply(sys.a, bm.leftCols(2 * Index(d.steps) * u));
        Eigen::Map<const DenseMat<S>> bv(bm.data(), bm.rows() * u, bm.cols() / u);
        Eigen::Map<const DenseMat<S>> wv(av.data(), av.rows() * u, av.cols() / u);
        t = bv.transpose() * wv;
    }
    ReducedSystem<S> red;
    red.kind = RealizationKind::extended_global;
    red.lifted = true;
    red.k1 = sys.b.dims().d3;
    red.k2 = sys.b.dims().d4;
    red.order = 2 * d.steps;
    red.breakdown = d.breakdown;
    red.a_small = t.topRows(2 * d.steps);
    red.b_coeff = DenseVec<S>::Zero(2 * d.steps);
    red.b_coeff(0) = d.omega(0, 0);
    red.c_out = einstein(sys.c, mode4_slice(d.basis, 0, 2 * Index(d.steps) * red.k2));
    red.basis = std::move(d.basis);
    return red;
}

// frequency-domain error bound for the classic slab projection:
//   |F(s) - Fhat(s)| <= |C (sI-A)^{-1}|_F . |h_next| . |e_m' (sI-H)^{-1} b| . sqrt(k1 k2)
// zero exactly when the process terminated (h_next = 0)
template <typename S>
double error_bound(const MLTISystem<S>& sys, const ReducedSystem<S>& red, std::complex<S> s)
{
    using C = std::complex<S>;
    if (red.kind != RealizationKind::classic_global) throw Error("error bound needs the classic slab projection");
    if (red.order < 1) throw RankError("empty reduced system");
    if (red.h_next == 0.0) return 0.0;
    DenseMat<C> shifted = (-red.a_small).template cast<C>();
    shifted.diagonal().array() += s;
    Eigen::FullPivLU<DenseMat<C>> lu(shifted);
    if (!lu.isInvertible()) throw SingularError("shifted operator is singular at this frequency");
    DenseVec<C> y = lu.solve(red.b_coeff.template cast<C>());
    const double tail = std::abs(y(red.order - 1));
    detail::ShiftedSolver<S> solver(sys.a, s, true);
    DenseMat<C> z = solver.solve(sys.c.unfolding().transpose().template cast<C>());
    return z.norm() * std::abs(red.h_next) * tail * std::sqrt(double(red.k1 * red.k2));
}

struct FrequencyCurve {
    std::vector<double> theta;         // unit-circle angle, or plain frequency for continuous systems
    std::vector<double> full_norm;     // sigma_max of Psi(F)
    std::vector<double> reduced_norm;  // sigma_max of Psi(Fhat), when a reduced model is given
    std::vector<double> error_norm;    // sigma_max of the difference
    std::vector<int> skipped;          // grid indices where the resolvent was singular
    double max_error = 0;
    double max_full = 0;
};

namespace detail {

inline std::vector<std::complex<double>> frequency_points(bool discrete, int n, std::vector<double>& param)
{
    if (n < 1) throw DimensionError("frequency grid needs at least one point");
    std::vector<std::complex<double>> s(static_cast<size_t>(n));
    param.resize(size_t(n));
    for (int k = 0; k < n; ++k) {
        if (discrete) {
            const double theta = (2.0 * std::numbers::pi * k) / n;
            param[size_t(k)] = theta;
            s[size_t(k)] = {std::cos(theta), std::sin(theta)};
        } else {
            const double w = n == 1 ? 1.0 : std::pow(10.0, -2.0 + 4.0 * k / (n - 1));
            param[size_t(k)] = w;
            s[size_t(k)] = {0.0, w};
        }
    }
    return s;
}

inline double sigma_max(const Eigen::MatrixXcd& m)
{
    return Eigen::JacobiSVD<Eigen::MatrixXcd>(m).singularValues()(0);
}

template <typename S>
FrequencyCurve sweep(const MLTISystem<S>& sys, const ReducedSystem<S>* red, int grid)
{
    sys.validate();
    FrequencyCurve out;
    const auto points = frequency_points(sys.discrete, grid, out.theta);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (size_t k = 0; k < points.size(); ++k) {
        try {
            Eigen::MatrixXcd f = transfer_eval(sys, points[k]);
            out.full_norm.push_back(sigma_max(f));
            out.max_full = std::max(out.max_full, out.full_norm.back());
            if (red) {
                Eigen::MatrixXcd fr = transfer_eval(*red, points[k]);
                out.reduced_norm.push_back(sigma_max(fr));
                out.error_norm.push_back(sigma_max(f - fr));
                out.max_error = std::max(out.max_error, out.error_norm.back());
            }
        } catch (const SingularError&) {
            out.skipped.push_back(int(k));
            out.full_norm.push_back(nan);
            if (red) {
                out.reduced_norm.push_back(nan);
                out.error_norm.push_back(nan);
            }
        }
    }
    return out;
}

}  // namespace detail

// response magnitude over the standard grid: equispaced angles on [0, 2pi)
// for discrete systems, logarithmic frequencies in [1e-2, 1e2] otherwise
template <typename S>
FrequencyCurve frequency_response(const MLTISystem<S>& sys, int grid)
{
    return detail::sweep<S>(sys, nullptr, grid);
}

// sampled reduction error over the same grid; max_error approximates the
// h-infinity distance, singular grid points are skipped and recorded
template <typename S>
FrequencyCurve hinf_error(const MLTISystem<S>& sys, const ReducedSystem<S>& red, int grid)
{
    return detail::sweep<S>(sys, &red, grid);
}

}  // namespace mlti
