#include "soupkit/dfo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace soupkit::dfo {

Solver parse_solver(const std::string& s) {
    if (s == "cobyla") return Solver::Cobyla;
    if (s == "nelder-mead") return Solver::NelderMead;
    throw InvalidArgumentError("unknown solver '" + s + "' (expected cobyla or nelder-mead)");
}

std::string solver_name(Solver s) { return s == Solver::Cobyla ? "cobyla" : "nelder-mead"; }

std::vector<double> clip_to_bounds(const std::vector<double>& x, const std::vector<double>& lo,
                                   const std::vector<double>& hi) {
    if (x.size() != lo.size() || x.size() != hi.size()) {
        throw BoundsError("clip_to_bounds: dimension mismatch");
    }
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (lo[i] > hi[i]) {
            throw BoundsError("clip_to_bounds: lower bound exceeds upper at coordinate " +
                              std::to_string(i));
        }
        out[i] = std::min(hi[i], std::max(lo[i], x[i]));
    }
    return out;
}

namespace {

void validate_problem(const OptimizationProblem& p) {
    if (p.dim < 1) throw InvalidArgumentError("optimize: dim must be >= 1");
    if (p.budget < 1) throw InvalidArgumentError("optimize: budget must be >= 1");
    if (!p.objective) throw InvalidArgumentError("optimize: objective not set");
    const auto d = static_cast<std::size_t>(p.dim);
    if (p.lower.size() != d || p.upper.size() != d || p.initial.size() != d) {
        throw BoundsError("optimize: bounds/initial dimension mismatch");
    }
    for (std::size_t i = 0; i < d; ++i) {
        if (p.lower[i] > p.upper[i]) {
            throw BoundsError("optimize: lower bound exceeds upper at coordinate " +
                              std::to_string(i));
        }
        if (p.initial[i] < p.lower[i] || p.initial[i] > p.upper[i]) {
            throw BoundsError("optimize: initial point outside bounds at coordinate " +
                              std::to_string(i));
        }
    }
}

// Evaluation bookkeeping shared by both solvers: budget accounting, exact-key
// memoization (repeat points are free), trace, and best-so-far memory.
class Engine {
public:
    explicit Engine(const OptimizationProblem& p) : p_(p) {}

    bool budget_left() const { return count_ < p_.budget; }

    // Returns false without evaluating when the point is unseen and the
    // budget is spent.
    bool eval(const std::vector<double>& x, double& value) {
        auto it = cache_.find(x);
        if (it != cache_.end()) {
            value = it->second;
            return true;
        }
        if (!budget_left()) return false;
        double v;
        try {
            v = p_.objective(x);
        } catch (const std::exception& e) {
            throw ObjectiveError(std::string("objective failed: ") + e.what(), count_);
        }
        ++count_;
        cache_.emplace(x, v);
        result_.trace.push_back({x, v});
        if (result_.trace.size() == 1 || v > result_.best_value) {
            result_.best_point = x;
            result_.best_value = v;
        }
        value = v;
        return true;
    }

    OptimizationResult take_result() {
        result_.evaluations = count_;
        return std::move(result_);
    }

private:
    const OptimizationProblem& p_;
    std::map<std::vector<double>, double> cache_;
    OptimizationResult result_;
    int count_ = 0;
};

struct Vertex {
    std::vector<double> x;
    double f;
};

// Axis-aligned starting simplex around x0 at the given scale; directions flip
// where the box leaves no room.
std::vector<std::vector<double>> initial_simplex(const OptimizationProblem& p, double scale) {
    const auto d = static_cast<std::size_t>(p.dim);
    std::vector<std::vector<double>> pts;
    pts.push_back(p.initial);
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<double> v = p.initial;
        if (v[i] + scale <= p.upper[i]) {
            v[i] += scale;
        } else if (v[i] - scale >= p.lower[i]) {
            v[i] -= scale;
        } else {
            // box thinner than the scale in this coordinate
            v[i] = (p.upper[i] - v[i] >= v[i] - p.lower[i]) ? p.upper[i] : p.lower[i];
        }
        pts.push_back(std::move(v));
    }
    return pts;
}

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Solve A g = rhs in place, partial pivoting. Returns false when singular.
bool solve_linear(std::vector<std::vector<double>>& a, std::vector<double>& rhs,
                  std::vector<double>& g) {
    const std::size_t n = rhs.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        }
        if (std::fabs(a[piv][col]) < 1e-14) return false;
        std::swap(a[piv], a[col]);
        std::swap(rhs[piv], rhs[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    g.assign(n, 0.0);
    for (std::size_t r = n; r-- > 0;) {
        double s = rhs[r];
        for (std::size_t c = r + 1; c < n; ++c) s -= a[r][c] * g[c];
        g[r] = s / a[r][r];
    }
    return true;
}

// Linear-interpolation trust-region method in the COBYLA family, specialized
// to box constraints. A simplex of dim+1 points carries the interpolation
// set; each iteration fits a linear model of the objective through it, takes
// the steepest-ascent step of length rho clipped to the box, and manages rho
// and the simplex geometry on failure. rho only ever shrinks, as in Powell's
// scheme.
void run_cobyla(const OptimizationProblem& p, const SolverOptions& opt, Engine& eng) {
    const auto d = static_cast<std::size_t>(p.dim);
    double rho = opt.rho_begin;

    double f0;
    if (!eng.eval(p.initial, f0)) return;

    auto pts = initial_simplex(p, rho);
    std::vector<Vertex> simplex;
    for (auto& x : pts) {
        double f;
        if (!eng.eval(x, f)) return;
        simplex.push_back({std::move(x), f});
    }

    const long max_iters = 200L * p.budget;
    for (long iter = 0; iter < max_iters && eng.budget_left(); ++iter) {
        std::size_t best = 0, worst = 0;
        for (std::size_t i = 1; i < simplex.size(); ++i) {
            if (simplex[i].f > simplex[best].f) best = i;
            if (simplex[i].f < simplex[worst].f) worst = i;
        }
        const Vertex& vb = simplex[best];

        // gradient of the linear interpolant through the simplex
        std::vector<std::vector<double>> edges;
        std::vector<double> df;
        for (std::size_t i = 0; i < simplex.size(); ++i) {
            if (i == best) continue;
            std::vector<double> e(d);
            for (std::size_t c = 0; c < d; ++c) e[c] = simplex[i].x[c] - vb.x[c];
            edges.push_back(std::move(e));
            df.push_back(simplex[i].f - vb.f);
        }
        std::vector<double> grad;
        const bool ok = solve_linear(edges, df, grad);
        double gnorm = 0.0;
        if (ok) {
            for (double v : grad) gnorm += v * v;
            gnorm = std::sqrt(gnorm);
        }

        auto is_vertex = [&](const std::vector<double>& x) {
            for (const auto& v : simplex) {
                if (v.x == x) return true;
            }
            return false;
        };

        bool improved = false;
        if (ok && gnorm > 1e-15) {
            std::vector<double> trial(d);
            for (std::size_t c = 0; c < d; ++c) trial[c] = vb.x[c] + rho * grad[c] / gnorm;
            trial = clip_to_bounds(trial, p.lower, p.upper);
            // a trial that lands on an existing vertex adds no information and
            // would degenerate the interpolation set
            if (!is_vertex(trial)) {
                double ft;
                if (!eng.eval(trial, ft)) return;
                if (ft > simplex[worst].f) {
                    simplex[worst] = {trial, ft};
                }
                improved = ft > vb.f;
            }
        }
        if (improved) continue;

        // Failed step: first repair geometry (replace the vertex farthest from
        // the best with a fresh axis point at the current scale), then shrink.
        std::size_t far = best;
        double far_d2 = -1.0;
        for (std::size_t i = 0; i < simplex.size(); ++i) {
            if (i == best) continue;
            const double d2 = dist2(simplex[i].x, simplex[best].x);
            if (d2 > far_d2) {
                far_d2 = d2;
                far = i;
            }
        }
        if (!ok) {
            // degenerate interpolation set: rebuild every vertex around the
            // best at the current scale
            OptimizationProblem local = p;
            local.initial = simplex[best].x;
            auto fresh_pts = initial_simplex(local, rho);
            std::vector<Vertex> rebuilt;
            rebuilt.push_back(simplex[best]);
            for (std::size_t i = 1; i < fresh_pts.size(); ++i) {
                double ff;
                if (!eng.eval(fresh_pts[i], ff)) return;
                rebuilt.push_back({std::move(fresh_pts[i]), ff});
            }
            simplex = std::move(rebuilt);
            continue;
        }

        const double stale_limit = 1.5 * rho;
        if (far_d2 > stale_limit * stale_limit) {
            // Axes ordered by how thinly the simplex spans them, measured over
            // edges from the best vertex. Take the first axis point that does
            // not duplicate an existing vertex; proposing a duplicate would
            // stall the model with a singular interpolation set.
            std::vector<double> extent(d, 0.0);
            for (std::size_t c = 0; c < d; ++c) {
                for (std::size_t i = 0; i < simplex.size(); ++i) {
                    if (i == best) continue;
                    extent[c] =
                        std::max(extent[c], std::fabs(simplex[i].x[c] - simplex[best].x[c]));
                }
            }
            std::vector<std::size_t> axes(d);
            std::iota(axes.begin(), axes.end(), std::size_t{0});
            std::stable_sort(axes.begin(), axes.end(),
                             [&](std::size_t a, std::size_t b) { return extent[a] < extent[b]; });
            auto is_vertex = [&](const std::vector<double>& x) {
                for (const auto& v : simplex) {
                    if (v.x == x) return true;
                }
                return false;
            };
            std::vector<double> fresh;
            for (std::size_t axis : axes) {
                for (double sign : {1.0, -1.0}) {
                    std::vector<double> cand = simplex[best].x;
                    cand[axis] = std::min(p.upper[axis],
                                          std::max(p.lower[axis], cand[axis] + sign * rho));
                    if (!is_vertex(cand)) {
                        fresh = std::move(cand);
                        break;
                    }
                }
                if (!fresh.empty()) break;
            }
            if (!fresh.empty()) {
                double ff;
                if (!eng.eval(fresh, ff)) return;
                simplex[far] = {std::move(fresh), ff};
                continue;
            }
            // every axis candidate already sits in the simplex: fall through
            // to a shrink
        }

        if (rho <= opt.rho_end) break;
        rho = std::max(opt.rho_end, rho * 0.5);
    }
}

// Nelder-Mead with boundary clipping, greedy expansion, and contraction
// coefficient 0.6 (picked on the quadratic calibration suite). Candidates are
// clipped into the box before evaluation, which keeps every evaluated point
// feasible. Where classic Nelder-Mead would shrink the whole simplex, this
// variant restarts it: a fresh axis-aligned simplex around the best vertex at
// half the current scale. The simplex shape tends to degenerate in higher
// dimensions and a restart recovers the span at the same evaluation cost as a
// shrink.
void run_nelder_mead(const OptimizationProblem& p, const SolverOptions& opt, Engine& eng) {
    const auto d = static_cast<std::size_t>(p.dim);
    const double n = static_cast<double>(p.dim);
    const double alpha = 1.0;
    const double beta = 1.0 + 2.0 / n;
    const double gamma = 0.6;

    double f0;
    if (!eng.eval(p.initial, f0)) return;

    auto pts = initial_simplex(p, opt.rho_begin);
    std::vector<Vertex> simplex;
    for (auto& x : pts) {
        double f;
        if (!eng.eval(x, f)) return;
        simplex.push_back({std::move(x), f});
    }

    auto order_desc = [&] {
        std::stable_sort(simplex.begin(), simplex.end(),
                         [](const Vertex& a, const Vertex& b) { return a.f > b.f; });
    };

    const long max_iters = 200L * p.budget;
    for (long iter = 0; iter < max_iters && eng.budget_left(); ++iter) {
        order_desc();
        const Vertex& best = simplex.front();
        Vertex& worst = simplex.back();
        const double f_second_worst = simplex[simplex.size() - 2].f;

        std::vector<double> centroid(d, 0.0);
        for (std::size_t i = 0; i + 1 < simplex.size(); ++i) {
            for (std::size_t c = 0; c < d; ++c) centroid[c] += simplex[i].x[c];
        }
        for (std::size_t c = 0; c < d; ++c) centroid[c] /= n;

        auto along = [&](double t) {
            std::vector<double> x(d);
            for (std::size_t c = 0; c < d; ++c) x[c] = centroid[c] + t * (centroid[c] - worst.x[c]);
            return clip_to_bounds(x, p.lower, p.upper);
        };

        auto reflected = along(alpha);
        double fr;
        if (!eng.eval(reflected, fr)) return;

        if (fr > best.f) {
            auto expanded = along(alpha * beta);
            double fe;
            if (!eng.eval(expanded, fe)) return;
            if (fe > fr) {
                worst = {std::move(expanded), fe};
            } else {
                worst = {std::move(reflected), fr};
            }
            continue;
        }
        if (fr > f_second_worst) {
            worst = {std::move(reflected), fr};
            continue;
        }

        const bool outside = fr > worst.f;
        auto contracted = along(outside ? alpha * gamma : -gamma);
        double fc;
        if (!eng.eval(contracted, fc)) return;
        if ((outside && fc >= fr) || (!outside && fc > worst.f)) {
            worst = {std::move(contracted), fc};
            continue;
        }

        // both contraction candidates failed: restart around the best vertex
        double scale = 0.0;
        for (std::size_t i = 1; i < simplex.size(); ++i) {
            scale = std::max(scale, std::sqrt(dist2(simplex[i].x, simplex[0].x)));
        }
        scale *= 0.5;
        if (scale < 1e-9) break;  // simplex collapsed onto a point
        OptimizationProblem local = p;
        local.initial = simplex[0].x;
        auto fresh = initial_simplex(local, scale);
        for (std::size_t i = 1; i < simplex.size(); ++i) {
            double f;
            if (!eng.eval(fresh[i], f)) return;
            simplex[i] = {std::move(fresh[i]), f};
        }
    }
}

}  // namespace

OptimizationResult optimize(const OptimizationProblem& problem, Solver solver,
                            const SolverOptions& options) {
    validate_problem(problem);
    Engine eng(problem);
    if (solver == Solver::Cobyla) {
        run_cobyla(problem, options, eng);
    } else {
        run_nelder_mead(problem, options, eng);
    }
    return eng.take_result();
}

}  // namespace soupkit::dfo
