#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "soupkit/dfo.hpp"
#include "soupkit/errors.hpp"
#include "soupkit/partition.hpp"
#include "soupkit/tensor_store.hpp"

namespace soupkit::soups {

struct PoolModel {
    std::string id;
    ParameterSet params;
    // validation accuracy in [0,1]; absent until measured
    std::optional<double> val_acc;
};

struct ModelPool {
    std::vector<PoolModel> models;
    // set by sort_pool: val_acc present on every model, non-increasing
    bool sorted = false;

    bool empty() const { return models.empty(); }
    std::size_t size() const { return models.size(); }
};

// Throws InvalidArgumentError on an empty pool, SchemaMismatchError when any
// member's schema differs from the first.
void require_pool_schema(const ModelPool& pool);

// Accuracy oracle. Implementations must be deterministic: the same parameters
// always yield the same accuracy, independent of call order and thread count.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual double val_acc(const ParameterSet& params) = 0;
    virtual std::string dataset_id() const = 0;
};

// Per-phase evaluator call tallies. A soup report reconciles exactly:
// total() calls were made against the evaluator, no more, no fewer.
struct EvalCounts {
    int sorting = 0;
    int gates = 0;
    int optimizer = 0;
    int acceptance = 0;
    int total() const { return sorting + gates + optimizer + acceptance; }
};

struct CandidateRecord {
    std::string id;
    // accuracy of the gate's running-average mix; absent for methods
    // without a gate
    std::optional<double> gate_acc;
    std::optional<bool> gate_pass;
    std::optional<MixingVector> lambda_star;
    // soup accuracy when this candidate was examined; absent for uniform
    std::optional<double> acc_before;
    // accuracy of the candidate fused model, when one was built and measured
    std::optional<double> acc_after;
    bool accepted = false;
};

struct SoupReport {
    std::string method;
    std::optional<double> tau;
    std::optional<int> budget;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> solver;
    // model ids in examination order; element 0 seeds the soup
    std::vector<std::string> ordering;
    std::vector<CandidateRecord> candidates;
    // number of models mixed into the fused result (1 = seed only)
    int final_k = 1;
    // accuracy of the fused result; absent when no evaluator was involved
    std::optional<double> final_val_acc;
    // filled in by callers that persist the fused checkpoint
    std::string checkpoint_path;
    EvalCounts evals;

    std::string to_json() const;
    static SoupReport from_json(const std::string& text);
};

// Thrown when an evaluator or optimizer failure aborts a soup mid-run; the
// report covers everything completed before the failure.
class SoupAbortError : public Error {
public:
    SoupAbortError(const std::string& msg, SoupReport partial_report)
        : Error(msg), partial(std::move(partial_report)) {}
    SoupReport partial;
};

// Elementwise mean of the whole pool. No evaluator: the report carries no
// accuracies and final_val_acc stays empty.
std::pair<ParameterSet, SoupReport> uniform_soup(const ModelPool& pool);

// Fills in missing val_acc values (each costs one evaluator call), then
// stable-sorts descending by val_acc. Ties keep their input order.
ModelPool sort_pool(const ModelPool& pool, Evaluator& eval);

// Sequential greedy soup: seed with the best model, then re-average with each
// next candidate and keep the average only when its accuracy strictly
// improves on the current soup.
std::pair<ParameterSet, SoupReport> greedy_soup(const ModelPool& pool, Evaluator& eval);

// Running-average gate: psi_tilde = k/(k+1) * psi + 1/(k+1) * theta, passing
// iff val_acc(psi_tilde) > tau * val_acc(psi), strictly. psi_acc supplies a
// cached val_acc(psi); when absent, psi is evaluated (one extra call).
// Returns {pass, gate_acc}.
std::pair<bool, double> approx_average_gate(const ParameterSet& psi, const ParameterSet& theta,
                                            int k, Evaluator& eval, double tau,
                                            std::optional<double> psi_acc = std::nullopt);

struct MixingOutcome {
    MixingVector lambda_star;
    ParameterSet psi_prime_star;
    double acc = 0.0;
    int evaluations = 0;
};

// Maximizes val_acc(mix_components(psi, theta, spec, lambda)) over the unit
// box, starting from lambda = all-k/(k+1). The returned accuracy is the best
// value seen, so it is >= the initial point's accuracy.
MixingOutcome optimize_mixing(const ParameterSet& psi, const ParameterSet& theta,
                              const PartitionSpec& spec, int k, Evaluator& eval, int budget,
                              std::uint64_t seed, dfo::Solver solver = dfo::Solver::Cobyla);

struct ManifoldOptions {
    double tau = 0.998;
    int budget = 250;
    std::uint64_t seed = 0;
    dfo::Solver solver = dfo::Solver::Cobyla;
};

// The full mixing soup: sort the pool, seed with the best model, and for each
// remaining candidate gate on the running average, optimize the per-component
// mixing factors when the gate passes, and adopt the optimized fusion only on
// strict improvement.
std::pair<ParameterSet, SoupReport> manifold_mix_soup(const ModelPool& pool,
                                                      const PartitionSpec& spec, Evaluator& eval,
                                                      const ManifoldOptions& options = {});

}  // namespace soupkit::soups
