#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "soupkit/errors.hpp"

namespace soupkit::dfo {

// Bound-constrained maximization of a black-box objective under a strict
// evaluation budget. Validation accuracy is piecewise constant in the mixing
// vector, so only derivative-free methods apply.
struct OptimizationProblem {
    int dim = 0;
    std::vector<double> lower;  // per-coordinate; fill_unit_box() sets 0/1
    std::vector<double> upper;
    std::vector<double> initial;
    int budget = 250;
    std::function<double(const std::vector<double>&)> objective;  // maximized
    uint64_t seed = 0;

    void fill_unit_box() {
        lower.assign(static_cast<std::size_t>(dim), 0.0);
        upper.assign(static_cast<std::size_t>(dim), 1.0);
    }
};

struct TracePoint {
    std::vector<double> point;
    double value;
};

struct OptimizationResult {
    std::vector<double> best_point;
    double best_value = 0.0;
    int evaluations = 0;               // objective calls actually spent
    std::vector<TracePoint> trace;     // every evaluation, in order
};

enum class Solver { Cobyla, NelderMead };

Solver parse_solver(const std::string& s);
std::string solver_name(Solver s);

struct SolverOptions {
    // Trust-region radii for the cobyla path; also the initial simplex scale
    // for nelder-mead.
    double rho_begin = 0.25;
    double rho_end = 1e-3;
};

// Runs the chosen solver. Guarantees:
//   - the initial point is evaluated first, so best_value >= f(initial)
//   - every evaluated point lies within [lower, upper]
//   - at most `budget` objective evaluations (repeat points are served from a
//     cache and cost nothing)
//   - deterministic for fixed problem and seed
// An objective exception propagates as ObjectiveError carrying the count of
// completed evaluations.
OptimizationResult optimize(const OptimizationProblem& problem, Solver solver = Solver::Cobyla,
                            const SolverOptions& options = {});

// result[j] = min(hi[j], max(lo[j], x[j])); throws BoundsError on dimension
// mismatch or lo[j] > hi[j].
std::vector<double> clip_to_bounds(const std::vector<double>& x, const std::vector<double>& lo,
                                   const std::vector<double>& hi);

}  // namespace soupkit::dfo
