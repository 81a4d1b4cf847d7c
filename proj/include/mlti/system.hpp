#pragma once

//
// discrete or continuous multilinear time-invariant system
//
//   X_{k+1} = A * X_k + B * U_k        (or  dX/dt = A*X + B*U)
//        Y_k = C * X_k
//
// with states, inputs, and outputs carried as order-4 tensors whose trailing
// extents are (1,1) in the plain matrix-state case.
//

#include "algebra.hpp"
#include "decompositions.hpp"

namespace mlti {

template <typename S>
struct MLTISystem {
    Tensor4<S> a;  // (n1,n2,n1,n2)
    Tensor4<S> b;  // (n1,n2,k1,k2)
    Tensor4<S> c;  // (q1,q2,n1,n2)
    bool discrete = true;

    void validate() const
    {
        if (!a.dims().square()) throw DimensionError("state operator must be square, got " + a.dims().str());
        if (b.dims().d1 != a.dims().d1 || b.dims().d2 != a.dims().d2)
            throw DimensionError("input map " + b.dims().str() + " does not match state operator " + a.dims().str());
        if (c.dims().d3 != a.dims().d1 || c.dims().d4 != a.dims().d2)
            throw DimensionError("output map " + c.dims().str() + " does not match state operator " + a.dims().str());
    }

    Index state_order() const { return a.rows(); }
};

using MLTISystemd = MLTISystem<double>;

// spectral stability test; computes the full spectrum of the unfolded state
// operator, so this is meant for small or triangular systems
template <typename S>
bool is_stable(const MLTISystem<S>& sys)
{
    sys.validate();
    const auto ev = spectrum(sys.a);
    if (sys.discrete) return ev.cwiseAbs().maxCoeff() < 1.0;
    return ev.real().maxCoeff() < 0.0;
}

// discrete-time rollout: returns [Y_0, ..., Y_steps] with Y_k = C * X_k and
// X_{k+1} = A * X_k + B * U_k; inputs must supply at least `steps` terms
template <typename S>
std::vector<Tensor4<S>> simulate(const MLTISystem<S>& sys, const Tensor4<S>& x0,
                                 const std::vector<Tensor4<S>>& inputs, int steps)
{
    sys.validate();
    if (!sys.discrete) throw Error("time stepping covers discrete-time systems only");
    if (steps < 0) throw DimensionError("negative step count");
    if (Index(inputs.size()) < Index(steps)) throw DimensionError("need one input per step");
    const Dims4 ad = sys.a.dims(), bd = sys.b.dims(), cd = sys.c.dims(), xd = x0.dims();
    if (xd.d1 != ad.d1 || xd.d2 != ad.d2)
        throw DimensionError("initial state " + xd.str() + " does not match state operator " + ad.str());
    const Dims4 yd{cd.d1, cd.d2, xd.d3, xd.d4};
    DenseMat<S> x = x0.unfolding();
    std::vector<Tensor4<S>> outputs;
    outputs.reserve(size_t(steps) + 1);
    for (int k = 0; k <= steps; ++k) {
        outputs.push_back(fold(detail::apply(sys.c, x), yd));
        if (k == steps) break;
        const Dims4 ud = inputs[size_t(k)].dims();
        if (ud.d1 != bd.d3 || ud.d2 != bd.d4 || ud.d3 != xd.d3 || ud.d4 != xd.d4)
            throw DimensionError("input " + ud.str() + " does not match input map " + bd.str());
        x = detail::apply(sys.a, x) + detail::apply(sys.b, inputs[size_t(k)].unfolding());
    }
    return outputs;
}

}  // namespace mlti
