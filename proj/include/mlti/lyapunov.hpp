#pragma once

//
// low-rank solution of the discrete Lyapunov (Stein) tensor equation
//
//     X - A * X * A' = B * B'
//
// by Galerkin projection onto one of the four Krylov processes. Each outer
// iteration extends the basis, projects the equation onto it, solves the
// small Stein equation, and evaluates the residual norm of the would-be
// iterate; the solution is only assembled (and truncated) once at the end.
//
// Residual tracking: for the block processes the unfolded basis has
// orthonormal columns, so the residual norm equals the Frobenius norm of the
// small coupling block. The slab-orthonormal processes lack column
// orthonormality; there the exact norm is recovered from the basis Gram
// matrix, maintained incrementally, via |R|^2 = tr((G K)^2) with
// K = kron(M, I_u).
//

#include <chrono>
#include <functional>

#include "krylov.hpp"

namespace mlti {

enum class SteinMethod { classic_global, classic_block, ext_global, ext_block };

inline const char* stein_method_name(SteinMethod m)
{
    switch (m) {
        case SteinMethod::classic_global: return "classic-global";
        case SteinMethod::classic_block: return "classic-block";
        case SteinMethod::ext_global: return "ext-global";
        case SteinMethod::ext_block: return "ext-block";
    }
    return "unknown";
}

inline SteinMethod stein_method_from_name(const std::string& name)
{
    for (SteinMethod m : {SteinMethod::classic_global, SteinMethod::classic_block, SteinMethod::ext_global,
                          SteinMethod::ext_block})
        if (name == stein_method_name(m)) return m;
    throw Error("unknown method '" + name + "'");
}

template <typename S>
struct LowRankFactors {
    Tensor4<S> z1;         // (n1,n2,k1,r*k2) slab form, or (n1,n2,1,r) from block processes
    Tensor4<S> z2;         // stored already transposed, so x_approx = z1 * z2
    Index rank = 0;        // retained directions r
    Index slab_width = 0;  // mode-4 width per direction: k2 for slab form, 1 for block form

    Tensor4<S> x_approx() const { return einstein(z1, z2); }
};

struct SolveReport {
    std::string method;
    Dims4 size{0, 0, 0, 0};
    double eps = 0;
    double dtol = 0;  // resolved truncation threshold
    int iterations = 0;
    std::vector<double> residuals;
    double seconds = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

template <typename S>
struct SolveOptions {
    double eps = 1e-6;
    double dtol = -1.0;  // negative: 1e-12 times the largest singular value of the projected solution
    int m_max = 30;
    // called after each outer iteration with the untruncated factors and the tracked residual
    std::function<void(int, const LowRankFactors<S>&, double)> observer;
};

namespace detail {

template <typename S>
bool spectrum_pairs_clear_of_one(const Eigen::Matrix<std::complex<S>, Eigen::Dynamic, 1>& ev)
{
    for (Index i = 0; i < ev.size(); ++i)
        for (Index j = i; j < ev.size(); ++j)
            if (std::abs(ev(i) * ev(j) - std::complex<S>(1)) <= 1e-10) return false;
    return true;
}

template <typename S>
void require_unique(const Eigen::Matrix<std::complex<S>, Eigen::Dynamic, 1>& ev)
{
    if (!spectrum_pairs_clear_of_one<S>(ev))
        throw UniquenessError("an eigenvalue pair product lies within 1e-10 of one; the equation has no unique solution");
}

// Parlett-Reinsch balancing by powers of two, in place; returns the diagonal
// of the similarity scale. Exact in binary floating point, and it keeps the
// Schur iteration from stalling on badly scaled projected operators.
template <typename S>
DenseVec<S> balance_in_place(DenseMat<S>& t)
{
    const Index p = t.rows();
    DenseVec<S> d = DenseVec<S>::Ones(p);
    for (bool again = true; again;) {
        again = false;
        for (Index i = 0; i < p; ++i) {
            S c = t.col(i).template lpNorm<1>() - std::abs(t(i, i));
            S r = t.row(i).template lpNorm<1>() - std::abs(t(i, i));
            if (c == S(0) || r == S(0)) continue;
            const S s = c + r;
            S f(1);
            while (c < r / S(2)) { c *= S(2); r /= S(2); f *= S(2); }
            while (c > r * S(2)) { c /= S(2); r *= S(2); f /= S(2); }
            if (f != S(1) && c + r < S(0.95) * s) {
                again = true;
                d(i) *= f;
                t.col(i) *= f;
                t.row(i) /= f;
            }
        }
    }
    return d;
}

// back-substitution for Y - T Y T' = W over a real Schur form T = Q Sm Q'
// with 1x1 and 2x2 diagonal blocks; returns Q Yt Q'
template <typename S>
DenseMat<S> stein_quasi_triangular(const DenseMat<S>& sm, const DenseMat<S>& q, const DenseMat<S>& w)
{
    const Index p = sm.rows();
    std::vector<Index> starts;
    for (Index i = 0; i < p;) {
        starts.push_back(i);
        i += (i + 1 < p && sm(i + 1, i) != S(0)) ? 2 : 1;
    }
    Eigen::Matrix<std::complex<S>, Eigen::Dynamic, 1> ev(p);
    for (Index bidx = 0; bidx < Index(starts.size()); ++bidx) {
        const Index i0 = starts[size_t(bidx)];
        const Index wd = (bidx + 1 < Index(starts.size()) ? starts[size_t(bidx) + 1] : p) - i0;
        if (wd == 1) {
            ev(i0) = sm(i0, i0);
        } else {
            const S tr = sm(i0, i0) + sm(i0 + 1, i0 + 1);
            const S det = sm(i0, i0) * sm(i0 + 1, i0 + 1) - sm(i0, i0 + 1) * sm(i0 + 1, i0);
            const S disc = tr * tr - 4 * det;
            const S im = std::sqrt(std::max(S(0), -disc)) / 2;
            ev(i0) = {tr / 2, im};
            ev(i0 + 1) = {tr / 2, -im};
        }
    }
    require_unique<S>(ev);

    DenseMat<S> wt = q.transpose() * w * q;
    DenseMat<S> yt = DenseMat<S>::Zero(p, p);
    const Index nb = Index(starts.size());
    for (Index jb = nb; jb-- > 0;) {
        const Index j0 = starts[size_t(jb)];
        const Index wj = (jb + 1 < nb ? starts[size_t(jb) + 1] : p) - j0;
        const Index j1 = j0 + wj;
        DenseMat<S> done_cols = DenseMat<S>::Zero(p, wj);
        if (j1 < p) done_cols = sm * (yt.rightCols(p - j1) * sm.block(j0, j1, wj, p - j1).transpose());
        const auto sjj = sm.block(j0, j0, wj, wj);
        for (Index ib = nb; ib-- > 0;) {
            const Index i0 = starts[size_t(ib)];
            const Index wi = (ib + 1 < nb ? starts[size_t(ib) + 1] : p) - i0;
            const Index i1 = i0 + wi;
            DenseMat<S> rhs = wt.block(i0, j0, wi, wj) + done_cols.middleRows(i0, wi);
            if (i1 < p) rhs += sm.block(i0, i1, wi, p - i1) * yt.block(i1, j0, p - i1, wj) * sjj.transpose();
            DenseMat<S> small = DenseMat<S>::Identity(wi * wj, wi * wj);
            for (Index a = 0; a < wj; ++a)
                for (Index c = 0; c < wj; ++c) small.block(a * wi, c * wi, wi, wi) -= sjj(a, c) * sm.block(i0, i0, wi, wi);
            Eigen::FullPivLU<DenseMat<S>> lu(small);
            if (!lu.isInvertible())
                throw UniquenessError("degenerate diagonal block in the Stein back-substitution");
            DenseVec<S> v = lu.solve(DenseVec<S>(Eigen::Map<const DenseVec<S>>(rhs.data(), wi * wj)));
            yt.block(i0, j0, wi, wj) = Eigen::Map<const DenseMat<S>>(v.data(), wi, wj);
        }
    }
    return q * yt * q.transpose();
}

// the same equation through a complex Schur form, which keeps converging on
// spectra where the real Francis iteration stalls. With Y = Q Yc Q^T the
// equation becomes Yc - Sm Yc Sm^T = Q^H W conj(Q) and every diagonal block
// is scalar.
template <typename S>
DenseMat<S> stein_triangular_complex(const DenseMat<S>& t, const DenseMat<S>& w)
{
    using C = std::complex<S>;
    using CMat = Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>;
    const Index p = t.rows();
    Eigen::ComplexSchur<CMat> schur(t.template cast<C>());
    if (schur.info() != Eigen::Success) throw Error("Schur factorization did not converge");
    const CMat& sm = schur.matrixT();
    const CMat& q = schur.matrixU();
    require_unique<S>(sm.diagonal().eval());
    CMat wt = q.adjoint() * w * q.conjugate();
    CMat yt = CMat::Zero(p, p);
    for (Index j = p; j-- > 0;) {
        Eigen::Matrix<C, Eigen::Dynamic, 1> done = Eigen::Matrix<C, Eigen::Dynamic, 1>::Zero(p);
        if (j + 1 < p) done = sm * (yt.rightCols(p - j - 1) * sm.row(j).tail(p - j - 1).transpose());
        for (Index i = p; i-- > 0;) {
            C rhs = wt(i, j) + done(i);
            if (i + 1 < p) rhs += (sm.row(i).tail(p - i - 1) * yt.col(j).tail(p - i - 1)).value() * sm(j, j);
            const C den = C(1) - sm(i, i) * sm(j, j);
            if (std::abs(den) <= S(1e-14))
                throw UniquenessError("degenerate diagonal block in the Stein back-substitution");
            yt(i, j) = rhs / den;
        }
    }
    return (q * yt * q.transpose()).real();
}

}  // namespace detail

// true iff every pairwise product of unfolding eigenvalues stays away from 1,
// the uniqueness condition of the equation
template <typename S>
bool uniqueness_check(const Tensor4<S>& a)
{
    return detail::spectrum_pairs_clear_of_one<S>(spectrum(a));
}

// dense solution of Y - T Y T' = Bm Bm'; Kronecker linearization up to order
// 60, balanced Schur reduction with quasi-triangular back-substitution above
template <typename S>
DenseMat<S> stein_small(const DenseMat<S>& t, const DenseMat<S>& bm)
{
    const Index p = t.rows();
    if (t.cols() != p) throw DimensionError("projected operator must be square");
    if (bm.rows() != p) throw DimensionError("projected right-hand side height mismatch");
    DenseMat<S> w = bm * bm.transpose();
    w = ((w + w.transpose()) * S(0.5)).eval();

    if (p <= 60) {
        Eigen::EigenSolver<DenseMat<S>> es(t, false);
        detail::require_unique<S>(es.eigenvalues());
        DenseMat<S> sys = DenseMat<S>::Identity(p * p, p * p);
        for (Index a = 0; a < p; ++a)
            for (Index c = 0; c < p; ++c) sys.block(a * p, c * p, p, p) -= t(a, c) * t;
        DenseVec<S> rhs = Eigen::Map<const DenseVec<S>>(w.data(), p * p);
        DenseVec<S> y = Eigen::PartialPivLU<DenseMat<S>>(sys).solve(rhs);
        DenseMat<S> ym = Eigen::Map<const DenseMat<S>>(y.data(), p, p);
        return ((ym + ym.transpose()) * S(0.5)).eval();
    }

    // balance first: T_b = D^-1 T D, solve Y_b - T_b Y_b T_b' = D^-1 W D^-1,
    // then Y = D Y_b D. The scale is diagonal so everything stays exact.
    DenseMat<S> tb = t;
    const DenseVec<S> scale = detail::balance_in_place(tb);
    w = (scale.cwiseInverse().asDiagonal() * w * scale.cwiseInverse().asDiagonal()).eval();
    Eigen::RealSchur<DenseMat<S>> schur;
    schur.setMaxIterations(Eigen::Index(100) * p);
    schur.compute(tb);
    DenseMat<S> yb = schur.info() == Eigen::Success
                         ? detail::stein_quasi_triangular<S>(schur.matrixT(), schur.matrixU(), w)
                         : detail::stein_triangular_complex<S>(tb, w);
    DenseMat<S> y = scale.asDiagonal() * yb * scale.asDiagonal();
    return ((y + y.transpose()) * S(0.5)).eval();
}

// Frobenius norm of the fully assembled residual X - A X A' - B B' with
// X = Z1 * Z2; refuses problems whose dense X would exceed 1e7 entries
template <typename S>
double residual_explicit(const Tensor4<S>& a, const Tensor4<S>& b, const LowRankFactors<S>& f)
{
    const Index n = a.rows();
    if (!a.dims().square()) throw DimensionError("operator must be square");
    if (n * n > Index(10'000'000)) throw DimensionError("explicit residual would densify more than 1e7 entries");
    DenseMat<S> z1 = f.z1.unfolding();
    DenseMat<S> z2 = f.z2.unfolding();
    if (z1.rows() != n || z2.cols() != n || z1.cols() != z2.rows())
        throw DimensionError("factor shapes do not match the operator");
    DenseMat<S> x = z1 * z2;
    DenseMat<S> ax = detail::apply(a, x);
    DenseMat<S> axat = detail::apply(a, DenseMat<S>(ax.transpose())).transpose();
    DenseMat<S> bm = b.unfolding();
    return (x - axat - bm * bm.transpose()).norm();
}

namespace detail {

// small residual block of the projected iterate:
//   [[ Y - T Y T' - Bh Bh',  -(T Y E) Ts' ],
//    [        sym.        ,  -Ts E'Y E Ts']]
// where E selects the trailing w indices; w = 0 drops the coupling rows
template <typename S>
DenseMat<S> stein_residual_block(const DenseMat<S>& t, const DenseMat<S>& ts, const DenseMat<S>& y,
                                 const DenseMat<S>& bhat)
{
    const Index p = t.rows(), w = ts.rows();
    DenseMat<S> m = DenseMat<S>::Zero(p + w, p + w);
    m.topLeftCorner(p, p) = y - t * y * t.transpose() - bhat * bhat.transpose();
    if (w > 0) {
        DenseMat<S> g = t * y.rightCols(w) * ts.transpose();
        m.block(0, p, p, w) = -g;
        m.block(p, 0, w, p) = -g.transpose();
        m.block(p, p, w, w) = -ts * y.bottomRightCorner(w, w) * ts.transpose();
    }
    return m;
}

// exact |V (M lift I_u) V'|_F from the basis Gram matrix
template <typename S>
double gram_congruence_norm(const DenseMat<S>& gram, const DenseMat<S>& m, Index u)
{
    DenseMat<S> x = slab_recombine(gram, m, u);
    const S t = x.cwiseProduct(x.transpose()).sum();
    return std::sqrt(std::max(S(0), t));
}

// truncated factorization of X = V (Y or Y lift I_u) V' from the projected
// solution; dtol < 0 resolves to 1e-12 times the top singular value
template <typename S>
LowRankFactors<S> factors_from_projection(const Eigen::Ref<const DenseMat<S>>& basis_cols, const DenseMat<S>& y,
                                          double dtol, bool slab_form, const Dims4& bdims, double* dtol_used)
{
    Eigen::BDCSVD<DenseMat<S>> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (dtol < 0) dtol = sv.size() > 0 ? 1e-12 * sv(0) : 0.0;
    Index r = 0;
    while (r < sv.size() && sv(r) >= dtol) ++r;
    r = std::max<Index>(1, std::min(r, sv.size()));
    if (dtol_used) *dtol_used = dtol;
    DenseVec<S> shalf = sv.head(r).cwiseSqrt();
    DenseMat<S> g1 = svd.matrixU().leftCols(r) * shalf.asDiagonal();
    DenseMat<S> g2t = svd.matrixV().leftCols(r) * shalf.asDiagonal();
    LowRankFactors<S> f;
    f.rank = r;
    if (slab_form) {
        const Index u = bdims.d3 * bdims.d4;
        f.slab_width = bdims.d4;
        f.z1 = fold(slab_recombine(basis_cols, g1, u), Dims4{bdims.d1, bdims.d2, bdims.d3, r * bdims.d4});
        DenseMat<S> z2t = slab_recombine(basis_cols, g2t, u);
        f.z2 = fold(DenseMat<S>(z2t.transpose()), Dims4{bdims.d3, r * bdims.d4, bdims.d1, bdims.d2});
    } else {
        f.slab_width = 1;
        f.z1 = fold(DenseMat<S>(basis_cols * g1), Dims4{bdims.d1, bdims.d2, 1, r});
        f.z2 = fold(DenseMat<S>((basis_cols * g2t).transpose()), Dims4{1, r, bdims.d1, bdims.d2});
    }
    return f;
}

// X = B B' exactly, for the zero operator
template <typename S>
LowRankFactors<S> zero_operator_solution(const Tensor4<S>& b, const SolveOptions<S>& opt, SolveReport& rep)
{
    DenseMat<S> bm = b.unfolding();
    if (bm.norm() == 0) throw RankError("zero right-hand side");
    Eigen::BDCSVD<DenseMat<S>> svd(bm, Eigen::ComputeThinU);
    DenseVec<S> sv2 = svd.singularValues().array().square();
    double dtol = opt.dtol < 0 ? 1e-12 * sv2(0) : opt.dtol;
    Index r = 0;
    while (r < sv2.size() && sv2(r) >= dtol) ++r;
    r = std::max<Index>(1, std::min(r, sv2.size()));
    DenseMat<S> g = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal();
    const Dims4 d = b.dims();
    LowRankFactors<S> f;
    f.rank = r;
    f.slab_width = 1;
    f.z1 = fold(DenseMat<S>(g), Dims4{d.d1, d.d2, 1, r});
    f.z2 = fold(DenseMat<S>(g.transpose()), Dims4{1, r, d.d1, d.d2});
    const double tail = std::sqrt(std::max(0.0, double(sv2.tail(sv2.size() - r).array().square().sum())));
    rep.dtol = dtol;
    rep.iterations = 1;
    rep.residuals = {tail};
    rep.converged = tail < opt.eps;
    if (opt.observer) opt.observer(1, f, tail);
    return f;
}

template <typename S, bool Extended>
LowRankFactors<S> run_stein_global(const Tensor4<S>& a, const Tensor4<S>& b, const SolveOptions<S>& opt,
                                   SolveReport& rep)
{
    using Builder = std::conditional_t<Extended, ExtendedGlobalBuilder<S>, GlobalBuilder<S>>;
    Builder builder(a, b);
    const Dims4 bd = b.dims();
    const Index u = bd.d3 * bd.d4;
    DenseMat<S> gram;
    auto grow_gram = [&]() {
        const DenseMat<S>& bm = builder.basis_unfolding();
        const Index nc = bm.cols(), old = gram.cols();
        if (nc == old) return;
        DenseMat<S> cross = bm.leftCols(old).transpose() * bm.rightCols(nc - old);
        gram.conservativeResize(nc, nc);
        gram.topRightCorner(old, nc - old) = cross;
        gram.bottomLeftCorner(nc - old, old) = cross.transpose();
        gram.bottomRightCorner(nc - old, nc - old) = bm.rightCols(nc - old).transpose() * bm.rightCols(nc - old);
    };
    grow_gram();

    DenseMat<S> y;
    Index p_used = 0;
    for (int it = 1; it <= opt.m_max; ++it) {
        const bool grew = builder.advance();
        grow_gram();
        const Index p = Extended ? 2 * Index(builder.steps()) : Index(builder.steps());
        if constexpr (Extended) {
            if (!grew) {
                // closure means every retained slab direction is mapped back
                // into the span, so a final projection onto all of them is
                // exact and the coupling term vanishes
                const DenseMat<S>& bm = builder.basis_unfolding();
                const Index q = bm.cols() / u;
                DenseMat<S> av = apply(a, bm);
                Eigen::Map<const DenseMat<S>> bv(bm.data(), bm.rows() * u, q);
                Eigen::Map<const DenseMat<S>> wv(av.data(), av.rows() * u, q);
                DenseMat<S> tq = bv.transpose() * wv;
                DenseMat<S> bhat = DenseMat<S>::Zero(q, 1);
                bhat(0, 0) = builder.omega()(0, 0);
                y = stein_small(tq, bhat);
                p_used = q;
                DenseMat<S> m = stein_residual_block(tq, DenseMat<S>(), y, bhat);
                const double r = gram_congruence_norm(gram, m, u);
                rep.residuals.push_back(r);
                rep.iterations = it;
                rep.converged = r < opt.eps;
                if (opt.observer) {
                    LowRankFactors<S> full = factors_from_projection<S>(bm, y, 0.0, true, bd, nullptr);
                    opt.observer(it, full, r);
                }
                rep.warnings.push_back("subspace closed at iteration " + std::to_string(it));
                break;
            }
        }
        DenseMat<S> tbar;
        if constexpr (Extended) {
            ExtendedGlobalDecomp<S> dd;
            dd.hbar = builder.hbar();
            dd.omega = builder.omega();
            dd.steps = builder.steps();
            try {
                tbar = projected_operator(dd);
            } catch (const RankError&) {
                const DenseMat<S>& bm = builder.basis_unfolding();
                DenseMat<S> av = apply(a, bm.leftCols(p * u));
                Eigen::Map<const DenseMat<S>> bv(bm.data(), bm.rows() * u, bm.cols() / u);
                Eigen::Map<const DenseMat<S>> wv(av.data(), av.rows() * u, p);
                tbar = bv.transpose() * wv;
                rep.warnings.push_back("projection recurrence pivot underflow at iteration " + std::to_string(it) +
                                       ", used explicit projection");
            }
        } else {
            tbar = builder.hbar();
        }
        const Index w_eff = Index(builder.basis_unfolding().cols() / u) - p;
        DenseMat<S> bhat = DenseMat<S>::Zero(p, 1);
        if constexpr (Extended)
            bhat(0, 0) = builder.omega()(0, 0);
        else
            bhat(0, 0) = builder.beta();
        y = stein_small(DenseMat<S>(tbar.topRows(p)), bhat);
        p_used = p;
        DenseMat<S> ts = tbar.block(p, p - w_eff, w_eff, w_eff);
        DenseMat<S> m = stein_residual_block(DenseMat<S>(tbar.topRows(p)), ts, y, bhat);
        const double r = gram_congruence_norm(gram, m, u);
        rep.residuals.push_back(r);
        rep.iterations = it;
        if (opt.observer) {
            LowRankFactors<S> full = factors_from_projection<S>(builder.basis_unfolding().leftCols(p * u), y, 0.0,
                                                                true, bd, nullptr);
            opt.observer(it, full, r);
        }
        if (r < opt.eps) {
            rep.converged = true;
            break;
        }
        if (!grew) {
            rep.warnings.push_back("subspace closed at iteration " + std::to_string(it));
            break;
        }
    }
    return factors_from_projection<S>(builder.basis_unfolding().leftCols(p_used * u), y, opt.dtol, true, bd,
                                      &rep.dtol);
}

template <typename S>
LowRankFactors<S> run_stein_block(const Tensor4<S>& a, const Tensor4<S>& b, bool extended,
                                  const SolveOptions<S>& opt, SolveReport& rep)
{
    BlockBuilder<S> builder(a, b, extended);
    if (builder.blocks() == 0) throw RankError("right-hand side block is rank deficient");
    const Dims4 bd = b.dims();
    const Index u = bd.d3 * bd.d4;
    const Index bw = builder.block_cols();

    DenseMat<S> y;
    Index p_used = 0;
    for (int it = 1; it <= opt.m_max; ++it) {
        const bool grew = builder.advance();
        if (!grew) {
            // closure leaves an invariant basis: one more projection onto
            // all retained columns is exact, with no coupling term
            const DenseMat<S>& v = builder.basis_unfolding();
            DenseMat<S> tq = v.transpose() * apply(a, v);
            DenseMat<S> bhat = DenseMat<S>::Zero(v.cols(), u);
            bhat.topRows(u) = builder.r0().topLeftCorner(u, u);
            y = stein_small(tq, bhat);
            p_used = v.cols();
            DenseMat<S> m = stein_residual_block(tq, DenseMat<S>(), y, bhat);
            const double r = m.norm();
            rep.residuals.push_back(r);
            rep.iterations = it;
            rep.converged = r < opt.eps;
            if (opt.observer) {
                LowRankFactors<S> full = factors_from_projection<S>(v, y, 0.0, false, bd, nullptr);
                opt.observer(it, full, r);
            }
            rep.warnings.push_back("subspace closed at iteration " + std::to_string(it));
            break;
        }
        const Index p = Index(builder.steps()) * bw;
        DenseMat<S> tbar = extended ? builder.tbar() : builder.hbar();
        DenseMat<S> bhat = DenseMat<S>::Zero(p, u);
        bhat.topRows(u) = builder.r0().topLeftCorner(u, u);
        y = stein_small(DenseMat<S>(tbar.topRows(p)), bhat);
        p_used = p;
        DenseMat<S> ts = tbar.block(p, p - bw, bw, bw);
        DenseMat<S> m = stein_residual_block(DenseMat<S>(tbar.topRows(p)), ts, y, bhat);
        const double r = m.norm();
        rep.residuals.push_back(r);
        rep.iterations = it;
        if (opt.observer) {
            LowRankFactors<S> full = factors_from_projection<S>(builder.basis_unfolding().leftCols(p), y, 0.0, false,
                                                                bd, nullptr);
            opt.observer(it, full, r);
        }
        if (r < opt.eps) {
            rep.converged = true;
            break;
        }
    }
    if (p_used == 0) throw RankError("subspace closed before the first projection");
    return factors_from_projection<S>(builder.basis_unfolding().leftCols(p_used), y, opt.dtol, false, bd, &rep.dtol);
}

}  // namespace detail

template <typename S>
std::pair<LowRankFactors<S>, SolveReport> solve_stein(const Tensor4<S>& a, const Tensor4<S>& b, SteinMethod method,
                                                      const SolveOptions<S>& opt = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    if (opt.m_max < 1) throw DimensionError("iteration limit must be positive");
    if (opt.eps <= 0) throw DimensionError("convergence tolerance must be positive");
    SolveReport rep;
    rep.method = stein_method_name(method);
    rep.size = a.dims();
    rep.eps = opt.eps;
    rep.dtol = opt.dtol;
    detail::require_operator_pair(a, b);
    LowRankFactors<S> f;
    if (a.nonzeros() == 0) {
        f = detail::zero_operator_solution(b, opt, rep);
    } else {
        switch (method) {
            case SteinMethod::classic_global: f = detail::run_stein_global<S, false>(a, b, opt, rep); break;
            case SteinMethod::ext_global: f = detail::run_stein_global<S, true>(a, b, opt, rep); break;
            case SteinMethod::classic_block: f = detail::run_stein_block<S>(a, b, false, opt, rep); break;
            case SteinMethod::ext_block: f = detail::run_stein_block<S>(a, b, true, opt, rep); break;
        }
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(f), std::move(rep)};
}

template <typename S>
std::pair<LowRankFactors<S>, SolveReport> solve_ext_global(const Tensor4<S>& a, const Tensor4<S>& b, double eps,
                                                           double dtol = -1.0, int m_max = 30)
{
    SolveOptions<S> opt;
    opt.eps = eps;
    opt.dtol = dtol;
    opt.m_max = m_max;
    return solve_stein(a, b, SteinMethod::ext_global, opt);
}

template <typename S>
std::pair<LowRankFactors<S>, SolveReport> solve_ext_block(const Tensor4<S>& a, const Tensor4<S>& b, double eps,
                                                          double dtol = -1.0, int m_max = 30)
{
    SolveOptions<S> opt;
    opt.eps = eps;
    opt.dtol = dtol;
    opt.m_max = m_max;
    return solve_stein(a, b, SteinMethod::ext_block, opt);
}

template <typename S>
std::pair<LowRankFactors<S>, SolveReport> solve_classic_global(const Tensor4<S>& a, const Tensor4<S>& b, double eps,
                                                               int m_max = 30)
{
    SolveOptions<S> opt;
    opt.eps = eps;
    opt.m_max = m_max;
    return solve_stein(a, b, SteinMethod::classic_global, opt);
}

template <typename S>
std::pair<LowRankFactors<S>, SolveReport> solve_classic_block(const Tensor4<S>& a, const Tensor4<S>& b, double eps,
                                                              int m_max = 30)
{
    SolveOptions<S> opt;
    opt.eps = eps;
    opt.m_max = m_max;
    return solve_stein(a, b, SteinMethod::classic_block, opt);
}

// the continuous-time equation A*X + X*A' = -B*B' is out of scope
template <typename S>
[[noreturn]] std::pair<LowRankFactors<S>, SolveReport> solve_lyapunov_continuous(const Tensor4<S>&, const Tensor4<S>&,
                                                                                 const SolveOptions<S>& = {})
{
    throw Error("continuous-time Lyapunov equations are not supported");
}

}  // namespace mlti
