#pragma once

// Convenience umbrella for the whole library.

#include "mlti/algebra.hpp"
#include "mlti/bt.hpp"
#include "mlti/decompositions.hpp"
#include "mlti/generators.hpp"
#include "mlti/io.hpp"
#include "mlti/krylov.hpp"
#include "mlti/lyapunov.hpp"
#include "mlti/mor.hpp"
#include "mlti/system.hpp"
#include "mlti/tensor.hpp"
