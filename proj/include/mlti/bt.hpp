#pragma once

//
// balanced truncation for discrete MLTI systems
//
// Both Gramians are obtained as low-rank factors from the Stein solver, the
// balancing projectors from one SVD of the small cross product of the
// factors, and the reduced triple by congruence. The retained order comes
// from an explicit request or a relative threshold on the Hankel values.
//

#include "lyapunov.hpp"
#include "mor.hpp"

namespace mlti {

template <typename S>
struct GramianPair {
    LowRankFactors<S> p;  // reachability, X - A X A' = B B'
    LowRankFactors<S> q;  // observability, X - A' X A = C' C
    SolveReport p_report, q_report;
    std::vector<std::string> warnings;
};

namespace detail {

template <typename S>
void require_discrete_stable(const Tensor4<S>& a, std::vector<std::string>& warnings)
{
    if (unfolding_is_triangular(a)) {
        if (spectral_radius(a) >= 1.0) throw Error("state operator is not discrete-time stable");
        return;
    }
    const double sigma = sigma_max_estimate(a);
    if (sigma < 1.0) return;
    if (a.rows() <= 4096) {
        if (spectral_radius(a) >= 1.0) throw Error("state operator is not discrete-time stable");
        return;
    }
    warnings.push_back("stability not certified: spectral norm estimate " + std::to_string(sigma) + " is not below 1");
}

}  // namespace detail

template <typename S>
GramianPair<S> gramians(const MLTISystem<S>& sys, double eps, double dtol, int m_max, SteinMethod method)
{
    sys.validate();
    if (!sys.discrete) throw Error("balanced truncation covers discrete-time systems only");
    GramianPair<S> g;
    detail::require_discrete_stable(sys.a, g.warnings);
    SolveOptions<S> opt;
    opt.eps = eps;
    opt.dtol = dtol;
    opt.m_max = m_max;
    Tensor4<S> at = transpose(sys.a);
    Tensor4<S> ct = transpose(sys.c);
    auto [p, prep] = solve_stein(sys.a, sys.b, method, opt);
    auto [q, qrep] = solve_stein(at, ct, method, opt);
    g.p = std::move(p);
    g.q = std::move(q);
    g.p_report = std::move(prep);
    g.q_report = std::move(qrep);
    return g;
}

// singular values of the cross product of the Gramian factors, non-increasing
template <typename S>
std::vector<double> hankel_values(const LowRankFactors<S>& p, const LowRankFactors<S>& q)
{
    DenseMat<S> z = p.z1.unfolding();
    DenseMat<S> w = q.z1.unfolding();
    if (z.rows() != w.rows()) throw DimensionError("gramian factors act on different state spaces");
    Eigen::BDCSVD<DenseMat<S>> svd(w.transpose() * z);
    const auto& sv = svd.singularValues();
    return {sv.data(), sv.data() + sv.size()};
}

struct BTOptions {
    int order = -1;     // >= 1: retain exactly this many states
    double tol = 1e-8;  // otherwise keep sigma_i > tol * sigma_1
};

template <typename S>
struct BTResult {
    ReducedSystem<S> reduced;
    std::vector<double> hankel;  // full list, non-increasing
    Tensor4<S> x_r, y_r;         // right/left projectors, (n1,n2,1,r)
    Index order = 0;
};

template <typename S>
BTResult<S> bt_reduce(const MLTISystem<S>& sys, const LowRankFactors<S>& p, const LowRankFactors<S>& q,
                      BTOptions opt = {})
{
    sys.validate();
    DenseMat<S> z = p.z1.unfolding();
    DenseMat<S> w = q.z1.unfolding();
    if (z.rows() != w.rows() || z.rows() != sys.a.rows())
        throw DimensionError("gramian factors do not match the system");
    Eigen::BDCSVD<DenseMat<S>> svd(w.transpose() * z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0) throw RankError("gramian factors have no overlap");
    Index nrank = 0;
    while (nrank < sv.size() && sv(nrank) > 1e-14 * sv(0)) ++nrank;
    Index r;
    if (opt.order >= 1) {
        r = opt.order;
        if (r > nrank) throw RankError("requested order exceeds the numerical rank of the cross product");
    } else {
        r = 0;
        while (r < nrank && sv(r) > opt.tol * sv(0)) ++r;
        r = std::max<Index>(1, r);
    }
    DenseVec<S> sinv = sv.head(r).cwiseSqrt().cwiseInverse();
    DenseMat<S> xr = z * svd.matrixV().leftCols(r) * sinv.asDiagonal();
    DenseMat<S> yr = w * svd.matrixU().leftCols(r) * sinv.asDiagonal();

    BTResult<S> res;
    res.hankel.assign(sv.data(), sv.data() + sv.size());
    res.order = r;
    const Dims4 ad = sys.a.dims();
    res.x_r = fold(DenseMat<S>(xr), Dims4{ad.d1, ad.d2, 1, r});
    res.y_r = fold(DenseMat<S>(yr), Dims4{ad.d1, ad.d2, 1, r});

    ReducedSystem<S>& red = res.reduced;
    red.kind = RealizationKind::balanced_truncation;
    red.lifted = false;
    red.k1 = sys.b.dims().d3;
    red.k2 = sys.b.dims().d4;
    red.order = int(r);
    red.a_small = yr.transpose() * detail::apply(sys.a, xr);
    red.b_small = yr.transpose() * sys.b.unfolding();
    red.c_out = fold(DenseMat<S>(sys.c.unfolding() * xr), Dims4{sys.c.dims().d1, sys.c.dims().d2, 1, r});
    return res;
}

}  // namespace mlti
