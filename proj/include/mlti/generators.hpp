#pragma once

// Reproducible test-problem generators. All randomness flows through a
// fixed-algorithm RNG so the same seed gives the same tensor on every
// platform and standard library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <string>
#include <unordered_set>
#include <vector>

#include <random>

#include "mlti/decompositions.hpp"
#include "mlti/tensor.hpp"

namespace mlti
{

namespace detail
{

// mt19937_64 is fully specified by the C++ standard, but the distribution
// adaptors are not. We map raw 64-bit draws to doubles ourselves so a seed
// pins the byte stream everywhere.
class DetRng
{
public:
    explicit DetRng(std::uint64_t seed) : eng_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform()
    {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, bound). Modulo bias is irrelevant for test data.
    std::uint64_t uniform_int(std::uint64_t bound)
    {
        return eng_() % bound;
    }

    // Standard normal via Box-Muller; deterministic pair caching.
    double gaussian()
    {
        if (has_spare_)
        {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 0x1.0p-53)
            u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Draw `count` distinct linear positions from [0, total) (Floyd's method),
// returned sorted so triplet insertion order is deterministic.
inline std::vector<std::int64_t> distinct_positions(DetRng& rng, std::int64_t total, std::int64_t count)
{
    if (count > total)
        throw std::invalid_argument("distinct_positions: count exceeds range");
    std::unordered_set<std::int64_t> chosen;
    chosen.reserve(static_cast<std::size_t>(count));
    for (std::int64_t j = total - count; j < total; ++j)
    {
        const auto t = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(j) + 1));
        if (!chosen.insert(t).second)
            chosen.insert(j);
    }
    std::vector<std::int64_t> out(chosen.begin(), chosen.end());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace detail

// Diagonal values for gen_spdiags before scaling. alternating flips the sign
// of the main diagonal on every other index; the two-point spectrum that
// produces is a much harder target for a polynomial Krylov space than the
// single point of the constant profile, while the inverse stays tame, so it
// separates the extended processes from the classic ones.
struct SpdiagsOptions
{
    double diag = 1.0;
    double super1 = -0.5;
    double super2 = 0.25;
    bool alternating = false;
};

// Banded upper-triangular operator on an (n, n, n, n) tensor: main diagonal
// plus two superdiagonals on the n^2 x n^2 unfolding. spectral_target > 0
// rescales the whole matrix so the spectral radius equals the target (the
// matrix is triangular, so the radius is the largest diagonal magnitude);
// spectral_target <= 0 keeps the raw values. The seed is accepted for
// interface symmetry with the random generators; the problem itself is
// deterministic.
template <typename Scalar = double>
Tensor4<Scalar> gen_spdiags(Index n, std::uint64_t seed = 0, double spectral_target = 0.9,
                            const SpdiagsOptions& opt = {})
{
    (void)seed;
    if (n < 2)
        throw std::invalid_argument("gen_spdiags: n must be at least 2");
    if (opt.diag == 0.0)
        throw std::invalid_argument("gen_spdiags: diagonal value must be nonzero");
    const Index p = n * n;
    const double scale = spectral_target > 0.0 ? spectral_target / std::abs(opt.diag) : 1.0;
    const auto d = static_cast<Scalar>(scale * opt.diag);
    const auto s1 = static_cast<Scalar>(scale * opt.super1);
    const auto s2 = static_cast<Scalar>(scale * opt.super2);
    std::vector<Eigen::Triplet<Scalar>> trips;
    trips.reserve(static_cast<std::size_t>(3 * p));
    for (Index i = 0; i < p; ++i)
    {
        trips.emplace_back(i, i, (opt.alternating && (i % 2)) ? -d : d);
        if (i + 1 < p && s1 != Scalar(0))
            trips.emplace_back(i, i + 1, s1);
        if (i + 2 < p && s2 != Scalar(0))
            trips.emplace_back(i, i + 2, s2);
    }
    SparseMat<Scalar> u(p, p);
    u.setFromTriplets(trips.begin(), trips.end());
    return Tensor4<Scalar>::from_unfolding(std::move(u), {n, n, n, n});
}

// Five-point Dirichlet Laplacian on an n x n interior grid, scaled by
// c^2 * dt / h^2. Interior stencil is -4 at the center and +1 at each
// in-grid neighbour, so the operator is symmetric negative definite.
// With euler = true the discrete-time transition I + scaled Laplacian is
// returned instead (stable for small enough dt). h <= 0 selects 1 / (n + 1).
template <typename Scalar = double>
Tensor4<Scalar> gen_heat2d(Index n, double c = 1.0, double dt = 1e-4, double h = -1.0, bool euler = false)
{
    if (n < 3)
        throw std::invalid_argument("gen_heat2d: n must be at least 3");
    if (h <= 0.0)
        h = 1.0 / static_cast<double>(n + 1);
    const auto scale = static_cast<Scalar>(c * c * dt / (h * h));
    const Index p = n * n;
    std::vector<Eigen::Triplet<Scalar>> trips;
    trips.reserve(static_cast<std::size_t>(5 * p));
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i)
        {
            const Index row = i + j * n;
            Scalar center = Scalar(-4) * scale;
            if (euler)
                center += Scalar(1);
            trips.emplace_back(row, row, center);
            if (i > 0)
                trips.emplace_back(row, row - 1, scale);
            if (i + 1 < n)
                trips.emplace_back(row, row + 1, scale);
            if (j > 0)
                trips.emplace_back(row, row - n, scale);
            if (j + 1 < n)
                trips.emplace_back(row, row + n, scale);
        }
    SparseMat<Scalar> u(p, p);
    u.setFromTriplets(trips.begin(), trips.end());
    return Tensor4<Scalar>::from_unfolding(std::move(u), {n, n, n, n});
}

// Random sparse tensor with uniform [0, 1) values at distinct positions;
// nnz = round(density * total), at least 1.
template <typename Scalar = double>
Tensor4<Scalar> gen_randsparse(const Dims4& dims, double density, std::uint64_t seed)
{
    if (!(density > 0.0) || density > 1.0)
        throw std::invalid_argument("gen_randsparse: density must be in (0, 1]");
    check_valid(dims);
    const Index rows = dims.rows();
    const Index cols = dims.cols();
    const std::int64_t total = static_cast<std::int64_t>(rows) * cols;
    const std::int64_t nnz =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(density * static_cast<double>(total))));
    detail::DetRng rng(seed);
    const auto pos = detail::distinct_positions(rng, total, nnz);
    std::vector<Eigen::Triplet<Scalar>> trips;
    trips.reserve(pos.size());
    for (const auto p : pos)
    {
        const Index col = static_cast<Index>(p / rows);
        const Index row = static_cast<Index>(p % rows);
        trips.emplace_back(row, col, static_cast<Scalar>(rng.uniform()));
    }
    SparseMat<Scalar> u(rows, cols);
    u.setFromTriplets(trips.begin(), trips.end());
    return Tensor4<Scalar>::from_unfolding(std::move(u), dims);
}

// Identity plus a sparse Gaussian perturbation on an (n, n, n, n) tensor,
// rescaled so the largest singular value of the unfolding equals
// spectral_target. That bounds the spectral radius, so the result is safe
// for discrete-time equations whenever spectral_target < 1.
template <typename Scalar = double>
Tensor4<Scalar> gen_identity_perturbed(Index n, double scale, std::uint64_t seed, double spectral_target = 0.95,
                                       double density = 0.05)
{
    if (n < 2)
        throw std::invalid_argument("gen_identity_perturbed: n must be at least 2");
    if (!(spectral_target > 0.0))
        throw std::invalid_argument("gen_identity_perturbed: spectral_target must be positive");
    const Index p = n * n;
    const std::int64_t total = static_cast<std::int64_t>(p) * p;
    const std::int64_t nnz =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(density * static_cast<double>(total))));
    detail::DetRng rng(seed);
    const auto pos = detail::distinct_positions(rng, total, nnz);
    std::vector<Eigen::Triplet<Scalar>> trips;
    trips.reserve(pos.size() + static_cast<std::size_t>(p));
    for (Index i = 0; i < p; ++i)
        trips.emplace_back(i, i, Scalar(1));
    for (const auto q : pos)
    {
        const Index col = static_cast<Index>(q / p);
        const Index row = static_cast<Index>(q % p);
        trips.emplace_back(row, col, static_cast<Scalar>(scale * rng.gaussian()));
    }
    SparseMat<Scalar> u(p, p);
    u.setFromTriplets(trips.begin(), trips.end()); // duplicates on the diagonal are summed
    Tensor4<Scalar> t = Tensor4<Scalar>::from_unfolding(u, {n, n, n, n});
    const double smax = sigma_max_estimate(t);
    if (smax <= 0.0)
        throw std::runtime_error("gen_identity_perturbed: degenerate operator");
    u *= static_cast<Scalar>(spectral_target / smax);
    return Tensor4<Scalar>::from_unfolding(std::move(u), {n, n, n, n});
}

enum class RhsKind
{
    sparse,
    dense
};

inline RhsKind rhs_kind_from_name(const std::string& name)
{
    if (name == "sparse")
        return RhsKind::sparse;
    if (name == "dense")
        return RhsKind::dense;
    throw std::invalid_argument("unknown right-hand-side kind: " + name);
}

// Random right-hand-side tensor. sparse: uniform values at 10% density
// (at least one entry per column on average is not guaranteed; the draw is
// unstructured). dense: standard normal entries.
template <typename Scalar = double>
Tensor4<Scalar> gen_rhs(const Dims4& dims, RhsKind kind, std::uint64_t seed)
{
    if (kind == RhsKind::sparse)
        return gen_randsparse<Scalar>(dims, 0.1, seed);
    detail::DetRng rng(seed);
    check_valid(dims);
    DenseMat<Scalar> u(dims.rows(), dims.cols());
    for (Index col = 0; col < u.cols(); ++col)
        for (Index row = 0; row < u.rows(); ++row)
            u(row, col) = static_cast<Scalar>(rng.gaussian());
    return Tensor4<Scalar>::from_unfolding(std::move(u), dims);
}

template <typename Scalar = double>
Tensor4<Scalar> gen_rhs(const Dims4& dims, const std::string& kind, std::uint64_t seed)
{
    return gen_rhs<Scalar>(dims, rhs_kind_from_name(kind), seed);
}

} // namespace mlti
