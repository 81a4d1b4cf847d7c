#include <doctest.h>

#include <Eigen/Dense>

#include "mlti/algebra.hpp"
#include "mlti/decompositions.hpp"
#include "mlti/generators.hpp"
#include "mlti/tensor.hpp"

using namespace mlti;

namespace
{

Tensor4d random_dense(const Dims4& d, std::uint64_t seed)
{
    detail::DetRng rng(seed);
    DenseMat<double> m(d.rows(), d.cols());
    for (Index c = 0; c < m.cols(); ++c)
        for (Index r = 0; r < m.rows(); ++r)
            m(r, c) = rng.gaussian();
    return Tensor4d::from_unfolding(std::move(m), d);
}

double entry(const Tensor4d& t, Index i1, Index i2, Index i3, Index i4)
{
    const auto& d = t.dims();
    const Index r = i1 + i2 * d.d1;
    const Index c = i3 + i4 * d.d3;
    return t.is_sparse() ? t.sparse_unfolding().coeff(r, c) : t.dense_unfolding()(r, c);
}

// contraction computed entry by entry, no unfolding shortcut
Tensor4d einstein_naive(const Tensor4d& a, const Tensor4d& b)
{
    const auto& da = a.dims();
    const auto& db = b.dims();
    Dims4 dc{da.d1, da.d2, db.d3, db.d4};
    DenseMat<double> out = DenseMat<double>::Zero(dc.rows(), dc.cols());
    for (Index i1 = 0; i1 < da.d1; ++i1)
        for (Index i2 = 0; i2 < da.d2; ++i2)
            for (Index j1 = 0; j1 < db.d3; ++j1)
                for (Index j2 = 0; j2 < db.d4; ++j2)
                {
                    double s = 0;
                    for (Index l1 = 0; l1 < da.d3; ++l1)
                        for (Index l2 = 0; l2 < da.d4; ++l2)
                            s += entry(a, i1, i2, l1, l2) * entry(b, l1, l2, j1, j2);
                    out(i1 + i2 * dc.d1, j1 + j2 * dc.d3) = s;
                }
    return Tensor4d::from_unfolding(std::move(out), dc);
}

double rel_err(const Tensor4d& x, const Tensor4d& y)
{
    const double ref = norm(y);
    return ref == 0 ? norm(x) : (unfold(x) - unfold(y)).norm() / ref;
}

} // namespace

TEST_CASE("unfolding places entries at row i1+i2*d1, column i3+i4*d3")
{
    Dims4 d{2, 3, 4, 5};
    std::vector<Entry<double>> es = {{1, 2, 3, 4, 7.5}, {0, 0, 0, 0, -1.0}, {1, 0, 3, 0, 2.0}};
    auto t = Tensor4d::from_entries(d, es);
    CHECK(t.is_sparse());
    CHECK(t.sparse_unfolding().coeff(1 + 2 * 2, 3 + 4 * 4) == 7.5);
    CHECK(t.sparse_unfolding().coeff(0, 0) == -1.0);
    CHECK(t.sparse_unfolding().coeff(1, 3) == 2.0);
    CHECK(t.nonzeros() == 3);
}

TEST_CASE("from_entries rejects out-of-range and duplicate indices")
{
    Dims4 d{2, 2, 2, 2};
    CHECK_THROWS_AS(Tensor4d::from_entries(d, {{2, 0, 0, 0, 1.0}}), DimensionError);
    CHECK_THROWS_AS(Tensor4d::from_entries(d, {{1, 1, 1, 1, 1.0}, {1, 1, 1, 1, 2.0}}), Error);
    CHECK_THROWS_AS(check_valid(Dims4{0, 1, 1, 1}), DimensionError);
}

TEST_CASE("einstein product equals the naive contraction")
{
    struct Case
    {
        Dims4 a, b;
    };
    const Case cases[] = {
        {{2, 3, 4, 2}, {4, 2, 3, 2}},
        {{3, 3, 3, 3}, {3, 3, 2, 2}},
        {{1, 4, 2, 5}, {2, 5, 1, 1}},
        {{5, 1, 1, 5}, {1, 5, 5, 1}},
    };
    std::uint64_t seed = 100;
    for (const auto& c : cases)
    {
        auto a = random_dense(c.a, seed++);
        auto b = random_dense(c.b, seed++);
        CHECK(rel_err(einstein(a, b), einstein_naive(a, b)) < 1e-13);
    }
    // sparse operand path
    auto a = gen_randsparse(Dims4{3, 4, 2, 5}, 0.3, 9);
    auto b = random_dense(Dims4{2, 5, 3, 3}, seed);
    CHECK(rel_err(einstein(a, b), einstein_naive(a, b)) < 1e-13);
    auto bs = gen_randsparse(Dims4{2, 5, 3, 3}, 0.4, 10);
    CHECK(rel_err(einstein(a, bs), einstein_naive(a, bs)) < 1e-13);
}

TEST_CASE("einstein product is associative and respects identity")
{
    auto a = random_dense(Dims4{2, 3, 3, 2}, 1);
    auto b = random_dense(Dims4{3, 2, 2, 2}, 2);
    auto c = random_dense(Dims4{2, 2, 3, 4}, 3);
    CHECK(rel_err(einstein(einstein(a, b), c), einstein(a, einstein(b, c))) < 1e-13);
    auto i_left = Tensor4d::identity(2, 3);
    auto i_right = Tensor4d::identity(3, 2);
    CHECK(rel_err(einstein(i_left, a), a) < 1e-15);
    CHECK(rel_err(einstein(a, i_right), a) < 1e-15);
}

TEST_CASE("einstein rejects mismatched contraction extents")
{
    auto a = random_dense(Dims4{2, 3, 4, 2}, 5);
    auto b = random_dense(Dims4{2, 4, 3, 2}, 6);
    CHECK_THROWS_AS(einstein(a, b), DimensionError);
}

TEST_CASE("transpose matches unfolding transpose and reverses products")
{
    auto a = random_dense(Dims4{2, 3, 4, 2}, 11);
    auto at = transpose(a);
    CHECK(at.dims() == a.dims().transposed());
    CHECK((unfold(at) - unfold(a).transpose()).norm() == 0);
    auto b = random_dense(Dims4{4, 2, 3, 3}, 12);
    CHECK(rel_err(transpose(einstein(a, b)), einstein(transpose(b), transpose(a))) < 1e-13);
    // sparse transpose keeps sparsity
    auto s = gen_randsparse(Dims4{3, 2, 4, 2}, 0.3, 13);
    CHECK(transpose(s).is_sparse());
    CHECK((unfold(transpose(s)) - unfold(s).transpose()).norm() == 0);
}

TEST_CASE("trace, inner product and norm agree with direct sums")
{
    auto a = random_dense(Dims4{3, 4, 3, 4}, 21);
    double tr = 0;
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j)
            tr += entry(a, i, j, i, j);
    CHECK(trace(a) == doctest::Approx(tr).epsilon(1e-14));

    auto x = random_dense(Dims4{2, 3, 4, 2}, 22);
    auto y = random_dense(Dims4{2, 3, 4, 2}, 23);
    double ip = 0;
    for (Index i1 = 0; i1 < 2; ++i1)
        for (Index i2 = 0; i2 < 3; ++i2)
            for (Index i3 = 0; i3 < 4; ++i3)
                for (Index i4 = 0; i4 < 2; ++i4)
                    ip += entry(x, i1, i2, i3, i4) * entry(y, i1, i2, i3, i4);
    CHECK(inner(x, y) == doctest::Approx(ip).epsilon(1e-13));
    CHECK(norm(x) == doctest::Approx(std::sqrt(inner(x, x))).epsilon(1e-13));
    // trace cyclicity under the product
    auto u = random_dense(Dims4{2, 3, 3, 2}, 24);
    auto v = random_dense(Dims4{3, 2, 2, 3}, 25);
    CHECK(trace(einstein(u, v)) == doctest::Approx(trace(einstein(v, u))).epsilon(1e-12));
}

TEST_CASE("kron_lift unfolds to the Kronecker product")
{
    detail::DetRng rng(31);
    DenseMat<double> p(3, 2);
    for (Index c = 0; c < 2; ++c)
        for (Index r = 0; r < 3; ++r)
            p(r, c) = rng.gaussian();
    auto j = random_dense(Dims4{2, 3, 2, 3}, 32);
    auto lifted = kron_lift(p, j);
    const auto ju = unfold(j);
    DenseMat<double> want(3 * ju.rows(), 2 * ju.cols());
    for (Index r = 0; r < 3; ++r)
        for (Index c = 0; c < 2; ++c)
            want.block(r * ju.rows(), c * ju.cols(), ju.rows(), ju.cols()) = p(r, c) * ju;
    CHECK((unfold(lifted) - want).norm() < 1e-14 * want.norm());
    CHECK(lifted.dims().d2 == 3 * j.dims().d2);
    CHECK(lifted.dims().d4 == 2 * j.dims().d4);
    // Frobenius norm of a lift against the identity scales by sqrt of its size
    auto ident = Tensor4d::identity(2, 3);
    CHECK(norm(kron_lift(p, ident)) == doctest::Approx(std::sqrt(6.0) * p.norm()).epsilon(1e-13));
}

TEST_CASE("fold and unfold round-trip, mode-4 concat and slice")
{
    auto a = random_dense(Dims4{2, 3, 2, 4}, 41);
    CHECK(rel_err(fold(unfold(a), a.dims()), a) == 0);

    auto b = random_dense(Dims4{2, 3, 2, 2}, 42);
    auto cat = mode4_concat(a, b);
    CHECK(cat.dims().d4 == 6);
    CHECK(rel_err(mode4_slice(cat, 0, 4), a) == 0);
    CHECK(rel_err(mode4_slice(cat, 4, 2), b) == 0);
    CHECK_THROWS_AS(mode4_slice(cat, 5, 2), DimensionError);
}

TEST_CASE("block assembly and extraction invert each other")
{
    auto t11 = random_dense(Dims4{2, 2, 2, 3}, 51);
    auto t12 = random_dense(Dims4{2, 2, 2, 3}, 52);
    auto t21 = random_dense(Dims4{2, 2, 2, 3}, 53);
    auto t22 = random_dense(Dims4{2, 2, 2, 3}, 54);
    auto big = block_assemble<double>({{t11, t12}, {t21, t22}});
    CHECK(big.dims().d2 == 4);
    CHECK(big.dims().d4 == 6);
    CHECK(rel_err(block_extract(big, 0, 0, 2, 3), t11) == 0);
    CHECK(rel_err(block_extract(big, 0, 1, 2, 3), t12) == 0);
    CHECK(rel_err(block_extract(big, 1, 0, 2, 3), t21) == 0);
    CHECK(rel_err(block_extract(big, 1, 1, 2, 3), t22) == 0);
    CHECK_THROWS_AS(block_extract(big, 2, 0, 2, 3), DimensionError);
}

TEST_CASE("slab_gram matches slab-by-slab inner products")
{
    const Index u = 3;
    auto v = random_dense(Dims4{3, 2, 1, 3 * u}, 61);
    auto w = random_dense(Dims4{3, 2, 1, 2 * u}, 62);
    auto g = slab_gram(v, w, u);
    CHECK(g.rows() == 3);
    CHECK(g.cols() == 2);
    const auto vu = unfold(v);
    const auto wu = unfold(w);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 2; ++j)
        {
            const double want = (vu.middleCols(i * u, u).cwiseProduct(wu.middleCols(j * u, u))).sum();
            CHECK(g(i, j) == doctest::Approx(want).epsilon(1e-13));
        }
}

TEST_CASE("slab_recombine equals multiplication by the lifted coefficient matrix")
{
    const Index u = 2;
    auto v = random_dense(Dims4{3, 2, 2, 4 * 1}, 71); // unfolding 6 x 8, slabs of width 2
    detail::DetRng rng(72);
    DenseMat<double> coeff(4, 3);
    for (Index c = 0; c < 3; ++c)
        for (Index r = 0; r < 4; ++r)
            coeff(r, c) = rng.gaussian();
    const auto got = detail::slab_recombine(unfold(v), coeff, u);
    DenseMat<double> lift = DenseMat<double>::Zero(4 * u, 3 * u);
    for (Index r = 0; r < 4; ++r)
        for (Index c = 0; c < 3; ++c)
            lift.block(r * u, c * u, u, u) = coeff(r, c) * DenseMat<double>::Identity(u, u);
    CHECK((got - unfold(v) * lift).norm() < 1e-13 * got.norm());
}

TEST_CASE("apply multiplies by the unfolding for sparse and dense operators")
{
    auto ad = random_dense(Dims4{2, 3, 2, 3}, 81);
    auto as = gen_randsparse(Dims4{2, 3, 2, 3}, 0.4, 82);
    DenseMat<double> m = unfold(random_dense(Dims4{2, 3, 1, 2}, 83));
    CHECK((detail::apply(ad, m) - unfold(ad) * m).norm() == 0);
    CHECK((detail::apply(as, m) - unfold(as) * m).norm() == 0);
}

TEST_CASE("tensor_qr returns an orthonormal factorization")
{
    auto w = random_dense(Dims4{4, 3, 1, 4}, 91);
    auto [q, r] = tensor_qr(w);
    const auto qu = unfold(q);
    CHECK((qu.transpose() * qu - DenseMat<double>::Identity(4, 4)).norm() < 1e-12);
    CHECK(rel_err(einstein(q, r), w) < 1e-13);
    const auto ru = unfold(r);
    for (Index i = 0; i < ru.rows(); ++i)
    {
        CHECK(ru(i, i) > 0);
        for (Index j = 0; j < i; ++j)
            CHECK(ru(i, j) == 0);
    }
    // rank-deficient input throws
    DenseMat<double> dep = unfold(w);
    dep.col(3) = dep.col(0) + dep.col(1);
    CHECK_THROWS_AS(tensor_qr(Tensor4d::from_unfolding(dep, w.dims())), RankError);
}

TEST_CASE("factorized operator solves and inverts")
{
    auto a = gen_spdiags(3, 0, 0.8);
    auto b = random_dense(Dims4{3, 3, 2, 2}, 101);
    FactorizedOp<double> op(a);
    auto x = op.solve(b);
    CHECK(rel_err(einstein(a, x), b) < 1e-10);
    auto ainv = inverse(a);
    CHECK(rel_err(einstein(ainv, a), Tensor4d::identity(3, 3)) < 1e-10);
    // transposed solves against the transposed operator
    DenseMat<double> rhs = unfold(b);
    auto y = op.solve_transposed(rhs);
    CHECK((unfold(a).transpose() * y - rhs).norm() < 1e-10 * rhs.norm());
}

TEST_CASE("spectral radius and largest singular value against dense oracles")
{
    auto a = random_dense(Dims4{3, 2, 3, 2}, 111);
    Eigen::MatrixXd m = unfold(a);
    const double rho_want = Eigen::EigenSolver<Eigen::MatrixXd>(m).eigenvalues().cwiseAbs().maxCoeff();
    CHECK(spectral_radius(a) == doctest::Approx(rho_want).epsilon(1e-10));
    const double smax_want = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    CHECK(sigma_max_estimate(a) == doctest::Approx(smax_want).epsilon(1e-8));
}
