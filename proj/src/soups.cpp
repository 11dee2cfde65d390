#include "soupkit/soups.hpp"

#include <algorithm>
#include <utility>

#include <nlohmann/json.hpp>

#include "soupkit/rng.hpp"

namespace soupkit::soups {

using nlohmann::json;

void require_pool_schema(const ModelPool& pool) {
    if (pool.empty()) throw InvalidArgumentError("model pool is empty");
    for (std::size_t i = 1; i < pool.models.size(); ++i) {
        require_same_schema(pool.models[0].params, pool.models[i].params);
    }
}

namespace {

// Forwards to the wrapped evaluator, tallying each completed call into the
// currently selected phase bucket.
class PhaseCounter : public Evaluator {
public:
    PhaseCounter(Evaluator& inner, EvalCounts& counts)
        : inner_(inner), bucket_(&counts.sorting) {}

    void phase(int& bucket) { bucket_ = &bucket; }

    double val_acc(const ParameterSet& params) override {
        const double v = inner_.val_acc(params);
        ++*bucket_;
        return v;
    }

    std::string dataset_id() const override { return inner_.dataset_id(); }

private:
    Evaluator& inner_;
    int* bucket_;
};

json candidate_to_json(const CandidateRecord& c) {
    json j;
    j["id"] = c.id;
    j["gate_acc"] = c.gate_acc ? json(*c.gate_acc) : json(nullptr);
    j["gate_pass"] = c.gate_pass ? json(*c.gate_pass) : json(nullptr);
    if (c.lambda_star) j["lambda_star"] = *c.lambda_star;
    j["acc_before"] = c.acc_before ? json(*c.acc_before) : json(nullptr);
    if (c.acc_after) j["acc_after"] = *c.acc_after;
    j["accepted"] = c.accepted;
    return j;
}

CandidateRecord candidate_from_json(const json& j) {
    CandidateRecord c;
    c.id = j.at("id").get<std::string>();
    if (!j.at("gate_acc").is_null()) c.gate_acc = j.at("gate_acc").get<double>();
    if (!j.at("gate_pass").is_null()) c.gate_pass = j.at("gate_pass").get<bool>();
    if (j.contains("lambda_star")) c.lambda_star = j.at("lambda_star").get<MixingVector>();
    if (!j.at("acc_before").is_null()) c.acc_before = j.at("acc_before").get<double>();
    if (j.contains("acc_after")) c.acc_after = j.at("acc_after").get<double>();
    c.accepted = j.at("accepted").get<bool>();
    return c;
}

}  // namespace

std::string SoupReport::to_json() const {
    json j;
    j["method"] = method;
    j["tau"] = tau ? json(*tau) : json(nullptr);
    j["budget"] = budget ? json(*budget) : json(nullptr);
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["solver"] = solver ? json(*solver) : json(nullptr);
    j["ordering"] = ordering;
    j["candidates"] = json::array();
    for (const auto& c : candidates) j["candidates"].push_back(candidate_to_json(c));
    j["final"] = {
        {"k", final_k},
        {"val_acc", final_val_acc ? json(*final_val_acc) : json(nullptr)},
        {"checkpoint_path", checkpoint_path},
    };
    j["evals"] = {
        {"sorting", evals.sorting},   {"gates", evals.gates},
        {"optimizer", evals.optimizer}, {"acceptance", evals.acceptance},
        {"total", evals.total()},
    };
    return j.dump(2);
}

SoupReport SoupReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaMismatchError(std::string("soup report is not valid JSON: ") + e.what());
    }
    try {
        SoupReport r;
        r.method = j.at("method").get<std::string>();
        if (!j.at("tau").is_null()) r.tau = j.at("tau").get<double>();
        if (!j.at("budget").is_null()) r.budget = j.at("budget").get<int>();
        if (!j.at("seed").is_null()) r.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("solver") && !j.at("solver").is_null()) {
            r.solver = j.at("solver").get<std::string>();
        }
        r.ordering = j.at("ordering").get<std::vector<std::string>>();
        for (const auto& c : j.at("candidates")) r.candidates.push_back(candidate_from_json(c));
        const auto& fin = j.at("final");
        r.final_k = fin.at("k").get<int>();
        if (!fin.at("val_acc").is_null()) r.final_val_acc = fin.at("val_acc").get<double>();
        r.checkpoint_path = fin.at("checkpoint_path").get<std::string>();
        if (j.contains("evals")) {
            const auto& e = j.at("evals");
            r.evals.sorting = e.at("sorting").get<int>();
            r.evals.gates = e.at("gates").get<int>();
            r.evals.optimizer = e.at("optimizer").get<int>();
            r.evals.acceptance = e.at("acceptance").get<int>();
        }
        return r;
    } catch (const json::exception& e) {
        throw SchemaMismatchError(std::string("soup report JSON shape is wrong: ") + e.what());
    }
}

std::pair<ParameterSet, SoupReport> uniform_soup(const ModelPool& pool) {
    require_pool_schema(pool);

    std::vector<const ParameterSet*> members;
    members.reserve(pool.size());
    for (const auto& m : pool.models) members.push_back(&m.params);
    ParameterSet fused = pool_mean(members);

    SoupReport report;
    report.method = "uniform";
    for (const auto& m : pool.models) report.ordering.push_back(m.id);
    for (std::size_t i = 1; i < pool.models.size(); ++i) {
        CandidateRecord rec;
        rec.id = pool.models[i].id;
        rec.accepted = true;
        report.candidates.push_back(std::move(rec));
    }
    report.final_k = static_cast<int>(pool.size());
    return {std::move(fused), std::move(report)};
}

ModelPool sort_pool(const ModelPool& pool, Evaluator& eval) {
    ModelPool out = pool;
    for (auto& m : out.models) {
        if (!m.val_acc) m.val_acc = eval.val_acc(m.params);
    }
    std::stable_sort(out.models.begin(), out.models.end(),
                     [](const PoolModel& a, const PoolModel& b) { return *a.val_acc > *b.val_acc; });
    out.sorted = true;
    return out;
}

std::pair<ParameterSet, SoupReport> greedy_soup(const ModelPool& pool, Evaluator& eval) {
    require_pool_schema(pool);

    SoupReport report;
    report.method = "greedy";
    PhaseCounter counter(eval, report.evals);

    try {
        counter.phase(report.evals.sorting);
        const ModelPool sorted = sort_pool(pool, counter);
        for (const auto& m : sorted.models) report.ordering.push_back(m.id);

        std::vector<const ParameterSet*> ingredients = {&sorted.models[0].params};
        ParameterSet soup = sorted.models[0].params;
        double soup_acc = *sorted.models[0].val_acc;

        counter.phase(report.evals.acceptance);
        for (std::size_t i = 1; i < sorted.models.size(); ++i) {
            std::vector<const ParameterSet*> trial = ingredients;
            trial.push_back(&sorted.models[i].params);
            ParameterSet averaged = pool_mean(trial);
            const double acc = counter.val_acc(averaged);

            CandidateRecord rec;
            rec.id = sorted.models[i].id;
            rec.acc_before = soup_acc;
            rec.acc_after = acc;
            rec.accepted = acc > soup_acc;
            report.candidates.push_back(std::move(rec));

            if (acc > soup_acc) {
                ingredients.push_back(&sorted.models[i].params);
                soup = std::move(averaged);
                soup_acc = acc;
            }
        }

        report.final_k = static_cast<int>(ingredients.size());
        report.final_val_acc = soup_acc;
        return {std::move(soup), std::move(report)};
    } catch (const SoupAbortError&) {
        throw;
    } catch (const Error& e) {
        throw SoupAbortError(std::string("greedy soup aborted: ") + e.what(), std::move(report));
    }
}

std::pair<bool, double> approx_average_gate(const ParameterSet& psi, const ParameterSet& theta,
                                            int k, Evaluator& eval, double tau,
                                            std::optional<double> psi_acc) {
    if (k < 1) throw InvalidArgumentError("approx_average_gate: k must be >= 1");
    if (!(tau > 0.0 && tau <= 1.0)) {
        throw InvalidArgumentError("approx_average_gate: tau must be in (0, 1]");
    }
    require_same_schema(psi, theta);

    const double dk = static_cast<double>(k);
    const double psi_acc_v = psi_acc ? *psi_acc : eval.val_acc(psi);
    ParameterSet psi_tilde = lincomb(dk / (dk + 1.0), psi, 1.0 / (dk + 1.0), theta);
    const double gate_acc = eval.val_acc(psi_tilde);
    return {gate_acc > tau * psi_acc_v, gate_acc};
}

MixingOutcome optimize_mixing(const ParameterSet& psi, const ParameterSet& theta,
                              const PartitionSpec& spec, int k, Evaluator& eval, int budget,
                              std::uint64_t seed, dfo::Solver solver) {
    if (k < 1) throw InvalidArgumentError("optimize_mixing: k must be >= 1");
    if (budget < 1) throw InvalidArgumentError("optimize_mixing: budget must be >= 1");
    require_same_schema(psi, theta);
    validate(spec, psi.tensor_names());

    const double dk = static_cast<double>(k);

    dfo::OptimizationProblem problem;
    problem.dim = spec.m;
    problem.fill_unit_box();
    problem.initial.assign(static_cast<std::size_t>(spec.m), dk / (dk + 1.0));
    problem.budget = budget;
    problem.seed = seed;
    problem.objective = [&](const std::vector<double>& lambda) {
        return eval.val_acc(mix_components(psi, theta, spec, lambda));
    };

    const dfo::OptimizationResult result = dfo::optimize(problem, solver);

    MixingOutcome out;
    out.lambda_star = result.best_point;
    out.psi_prime_star = mix_components(psi, theta, spec, result.best_point);
    out.acc = result.best_value;
    out.evaluations = result.evaluations;
    return out;
}

std::pair<ParameterSet, SoupReport> manifold_mix_soup(const ModelPool& pool,
                                                      const PartitionSpec& spec, Evaluator& eval,
                                                      const ManifoldOptions& options) {
    require_pool_schema(pool);
    validate(spec, pool.models[0].params.tensor_names());
    if (!(options.tau > 0.0 && options.tau <= 1.0)) {
        throw InvalidArgumentError("manifold_mix_soup: tau must be in (0, 1]");
    }
    if (options.budget < 1) throw InvalidArgumentError("manifold_mix_soup: budget must be >= 1");

    SoupReport report;
    report.method = "manifold";
    report.tau = options.tau;
    report.budget = options.budget;
    report.seed = options.seed;
    report.solver = dfo::solver_name(options.solver);
    PhaseCounter counter(eval, report.evals);

    try {
        counter.phase(report.evals.sorting);
        const ModelPool sorted = sort_pool(pool, counter);
        for (const auto& m : sorted.models) report.ordering.push_back(m.id);

        ParameterSet psi = sorted.models[0].params;
        double psi_acc = *sorted.models[0].val_acc;
        int k = 1;

        for (std::size_t i = 1; i < sorted.models.size(); ++i) {
            const auto& candidate = sorted.models[i];

            counter.phase(report.evals.gates);
            const auto [pass, gate_acc] =
                approx_average_gate(psi, candidate.params, k, counter, options.tau, psi_acc);

            CandidateRecord rec;
            rec.id = candidate.id;
            rec.gate_acc = gate_acc;
            rec.gate_pass = pass;
            rec.acc_before = psi_acc;

            if (pass) {
                counter.phase(report.evals.optimizer);
                MixingOutcome mixed =
                    optimize_mixing(psi, candidate.params, spec, k, counter, options.budget,
                                    derive_seed(options.seed, "mix", i), options.solver);
                rec.lambda_star = mixed.lambda_star;
                rec.acc_after = mixed.acc;
                if (mixed.acc > psi_acc) {
                    rec.accepted = true;
                    psi = std::move(mixed.psi_prime_star);
                    psi_acc = mixed.acc;
                    ++k;
                }
            }
            report.candidates.push_back(std::move(rec));
        }

        report.final_k = k;
        report.final_val_acc = psi_acc;
        return {std::move(psi), std::move(report)};
    } catch (const SoupAbortError&) {
        throw;
    } catch (const Error& e) {
        throw SoupAbortError(std::string("manifold soup aborted: ") + e.what(),
                             std::move(report));
    }
}

}  // namespace soupkit::soups
