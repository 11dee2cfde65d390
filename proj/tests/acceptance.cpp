// Acceptance gate. Each check prints exactly one PASS/FAIL line; the exit
// code is the number of failed checks. Tolerances are pinned next to the
// comparisons they guard.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "soupkit/bench.hpp"
#include "soupkit/dfo.hpp"
#include "soupkit/errors.hpp"
#include "soupkit/partition.hpp"
#include "soupkit/rng.hpp"
#include "soupkit/soups.hpp"
#include "soupkit/tensor_store.hpp"

using namespace soupkit;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void expect(bool ok, const std::string& msg) {
    if (!ok) throw std::runtime_error(msg);
}

std::string fmt(const char* f, ...) {
    va_list ap;
    va_start(ap, f);
    char buf[256];
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

bool same_bits(const ParameterSet& a, const ParameterSet& b) {
    if (!a.same_schema(b)) return false;
    for (std::size_t t = 0; t < a.size(); ++t) {
        const auto& da = a.at(t).data;
        const auto& db = b.at(t).data;
        for (std::size_t i = 0; i < da.size(); ++i) {
            if (std::bit_cast<std::uint32_t>(da[i]) != std::bit_cast<std::uint32_t>(db[i])) {
                return false;
            }
        }
    }
    return true;
}

ParameterSet random_params(Rng& rng, const std::vector<std::pair<std::string, int>>& schema) {
    std::vector<TensorEntry> entries;
    for (const auto& [name, n] : schema) {
        TensorEntry e{name, {n}, std::vector<float>(static_cast<std::size_t>(n))};
        for (auto& v : e.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        entries.push_back(std::move(e));
    }
    return ParameterSet::from_entries(std::move(entries));
}

// Accuracy table keyed by parameter fingerprint; unknown parameters are a test
// bug and abort loudly.
class ScriptedEval : public soups::Evaluator {
public:
    std::unordered_map<std::uint64_t, double> table;
    int calls = 0;

    double val_acc(const ParameterSet& params) override {
        ++calls;
        auto it = table.find(fingerprint(params));
        if (it == table.end()) throw std::runtime_error("unscripted parameters evaluated");
        return it->second;
    }
    std::string dataset_id() const override { return "scripted"; }
};

// Deterministic pseudo-accuracy derived from the parameter bytes alone.
class SurrogateEval : public soups::Evaluator {
public:
    double val_acc(const ParameterSet& params) override {
        return static_cast<double>(fingerprint(params) % 100003ULL) / 100003.0;
    }
    std::string dataset_id() const override { return "surrogate"; }
};

struct StoredRun {
    soups::ModelPool pool;
    ParameterSet fused;
    soups::SoupReport report;
};

std::vector<StoredRun> g_runs;          // filled by check 2, reused by check 3
std::string g_desk_ckpt;                // filled by check 7, reused by check 8
std::string g_desk_report;

fs::path scratch() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "soupkit-acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// 1. A four-model pool with a scripted evaluator reproduces the decision
//    trace a plain hand-replay of the algorithm produces: sort order, gate
//    verdicts at tau = 0.998, acceptance verdicts, eval-count ledger.

std::string check_scripted_trace() {
    auto t0 = Clock::now();

    auto model = [](std::initializer_list<float> vals) {
        TensorEntry e{"w", {4}, std::vector<float>(vals)};
        return ParameterSet::from_entries({e});
    };
    soups::ModelPool pool;
    pool.models.push_back({"A", model({0.1f, 0.2f, 0.3f, 0.4f}), std::nullopt});
    pool.models.push_back({"B", model({0.5f, -0.1f, 0.2f, 0.0f}), std::nullopt});
    pool.models.push_back({"C", model({-0.3f, 0.4f, 0.1f, 0.2f}), std::nullopt});
    pool.models.push_back({"D", model({0.2f, 0.2f, -0.2f, 0.1f}), std::nullopt});

    const PartitionSpec spec = auto_partition({"w"}, 1, PartitionStrategy::ContiguousBlocks);
    const double tau = 0.998;

    ScriptedEval eval;
    for (std::size_t i = 0; i < pool.models.size(); ++i) {
        eval.table[fingerprint(pool.models[i].params)] = 0.800 - 0.010 * static_cast<double>(i);
    }
    // gate mixes and (budget = 1) optimizer probes along the expected path
    const ParameterSet m1 = lincomb(0.5, pool.models[0].params, 0.5, pool.models[1].params);
    const ParameterSet gate_c = lincomb(2.0 / 3.0, m1, 1.0 / 3.0, pool.models[2].params);
    const ParameterSet gate_d = lincomb(2.0 / 3.0, m1, 1.0 / 3.0, pool.models[3].params);
    const ParameterSet opt_d =
        mix_components(m1, pool.models[3].params, spec, MixingVector{2.0 / 3.0});
    eval.table[fingerprint(m1)] = 0.805;     // B: gate passes, optimizer accepts
    eval.table[fingerprint(gate_c)] = 0.801; // C: below 0.998 * 0.805, gate fails
    eval.table[fingerprint(gate_d)] = 0.8045;
    eval.table[fingerprint(opt_d)] = 0.8044; // D: gate passes, improvement fails
    // the two D probes can round to identical bytes; read the effective values
    const double scripted_gate_d = eval.table.at(fingerprint(gate_d));
    const double scripted_opt_d = eval.table.at(fingerprint(opt_d));

    // hand replay: sort by accuracy, then gate / optimize / accept per candidate
    struct Step {
        std::string id;
        double gate_acc, acc_before;
        bool gate_pass, accepted;
        std::optional<double> acc_after;
    };
    std::vector<Step> plan;
    ParameterSet psi = pool.models[0].params;  // accuracies are already sorted
    double psi_acc = 0.800;
    int k = 1;
    for (std::size_t i = 1; i < pool.models.size(); ++i) {
        const double dk = k;
        ParameterSet tilde =
            lincomb(dk / (dk + 1.0), psi, 1.0 / (dk + 1.0), pool.models[i].params);
        Step s;
        s.id = pool.models[i].id;
        s.acc_before = psi_acc;
        s.gate_acc = eval.table.at(fingerprint(tilde));
        s.gate_pass = s.gate_acc > tau * psi_acc;
        s.accepted = false;
        if (s.gate_pass) {
            ParameterSet probe = mix_components(psi, pool.models[i].params, spec,
                                                MixingVector{dk / (dk + 1.0)});
            s.acc_after = eval.table.at(fingerprint(probe));
            if (*s.acc_after > psi_acc) {
                s.accepted = true;
                psi = std::move(probe);
                psi_acc = *s.acc_after;
                ++k;
            }
        }
        plan.push_back(std::move(s));
    }
    expect(plan[0].accepted && !plan[1].gate_pass && plan[2].gate_pass && !plan[2].accepted,
           "replay did not produce the intended accept/fail/reject pattern");
    expect(scripted_gate_d >= scripted_opt_d, "scripted table lost its ordering");

    soups::ManifoldOptions opt;
    opt.tau = tau;
    opt.budget = 1;  // optimizer evaluates exactly the gate point
    opt.seed = 42;
    auto [fused, report] = soups::manifold_mix_soup(pool, spec, eval, opt);

    const std::vector<std::string> want_order = {"A", "B", "C", "D"};
    expect(report.ordering == want_order, "sort order differs from replay");
    expect(report.candidates.size() == plan.size(), "candidate count differs");
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto& got = report.candidates[i];
        const auto& want = plan[i];
        expect(got.id == want.id, "candidate id differs at step " + std::to_string(i));
        expect(got.gate_acc && *got.gate_acc == want.gate_acc, "gate accuracy differs");
        expect(got.gate_pass && *got.gate_pass == want.gate_pass, "gate verdict differs");
        expect(got.acc_before && *got.acc_before == want.acc_before, "acc_before differs");
        expect(got.acc_after == want.acc_after, "acc_after differs");
        expect(got.accepted == want.accepted, "acceptance verdict differs");
    }
    expect(report.final_k == k, "final_k differs from replay");
    expect(report.final_val_acc && *report.final_val_acc == psi_acc, "final accuracy differs");
    expect(same_bits(fused, psi), "fused parameters differ from replay");
    expect(report.evals.sorting == 4 && report.evals.gates == 3 && report.evals.optimizer == 2 &&
               report.evals.acceptance == 0,
           "eval-count ledger is off");
    expect(eval.calls == report.evals.total(), "ledger does not reconcile with actual calls");

    const double dt = seconds_since(t0);
    expect(dt < 10.0, "trace check exceeded 10 s");
    return fmt("4 models, %d evals, %.2fs", eval.calls, dt);
}

// ---------------------------------------------------------------------------
// 2. Twenty seeded random pools: neither soup ever finishes below the best
//    single model, and the accepted-step accuracies strictly increase.
//    Comparisons are exact; every accuracy comes from the cached evaluator.

std::string check_monotonicity() {
    SurrogateEval eval;
    const std::vector<std::pair<std::string, int>> schema = {{"blk.a", 6}, {"blk.b", 3}};
    const PartitionSpec spec =
        auto_partition({"blk.a", "blk.b"}, 2, PartitionStrategy::ContiguousBlocks);

    int accepted_total = 0;
    for (int s = 0; s < 20; ++s) {
        Rng rng(derive_seed(7, "acceptance-pool", static_cast<std::uint64_t>(s)));
        soups::ModelPool pool;
        for (int m = 0; m < 5; ++m) {
            pool.models.push_back({"m" + std::to_string(m), random_params(rng, schema),
                                   std::nullopt});
        }
        double best = 0.0;
        for (const auto& m : pool.models) best = std::max(best, eval.val_acc(m.params));

        soups::ManifoldOptions opt;
        opt.budget = 15;
        opt.seed = static_cast<std::uint64_t>(s);
        auto [mf, mrep] = soups::manifold_mix_soup(pool, spec, eval, opt);
        auto [gf, grep] = soups::greedy_soup(pool, eval);

        for (const auto* rep : {&mrep, &grep}) {
            expect(rep->final_val_acc.has_value(), "missing final accuracy");
            expect(*rep->final_val_acc >= best, fmt("seed %d: soup below best member", s));
            double chain = *rep->final_val_acc;  // re-walk the accepted chain
            double prev = -1.0;
            for (const auto& c : rep->candidates) {
                if (!c.accepted) continue;
                ++accepted_total;
                expect(c.acc_before && c.acc_after, "accepted step missing accuracies");
                expect(*c.acc_after > *c.acc_before, "accepted step did not improve");
                if (prev >= 0.0) expect(*c.acc_before == prev, "accepted chain broken");
                prev = *c.acc_after;
            }
            if (prev >= 0.0) expect(prev == chain, "chain does not end at final accuracy");
        }

        g_runs.push_back({pool, std::move(mf), std::move(mrep)});
        g_runs.push_back({std::move(pool), std::move(gf), std::move(grep)});
    }
    expect(accepted_total > 0, "no candidate was ever accepted; pools too easy");
    return fmt("40 runs, %d accepted steps", accepted_total);
}

// ---------------------------------------------------------------------------
// 3. Every fused parameter from the runs above lies inside the elementwise
//    [min, max] hull of its actual ingredients (seed model plus accepted
//    candidates), tolerance 1e-6 absolute.

std::string check_hull_containment() {
    expect(!g_runs.empty(), "no stored runs (previous check failed)");
    const double kTol = 1e-6;

    int checked = 0;
    for (const auto& run : g_runs) {
        std::set<std::string> members = {run.report.ordering.at(0)};
        for (const auto& c : run.report.candidates) {
            if (c.accepted) members.insert(c.id);
        }
        std::vector<const ParameterSet*> ingredients;
        for (const auto& m : run.pool.models) {
            if (members.count(m.id)) ingredients.push_back(&m.params);
        }
        expect(ingredients.size() == members.size(), "ingredient lookup failed");

        for (std::size_t t = 0; t < run.fused.size(); ++t) {
            const auto& fd = run.fused.at(t).data;
            for (std::size_t i = 0; i < fd.size(); ++i) {
                float lo = std::numeric_limits<float>::max();
                float hi = std::numeric_limits<float>::lowest();
                for (const auto* p : ingredients) {
                    lo = std::min(lo, p->at(t).data[i]);
                    hi = std::max(hi, p->at(t).data[i]);
                }
                expect(fd[i] >= lo - kTol && fd[i] <= hi + kTol,
                       fmt("coordinate %zu/%zu escapes the hull", t, i));
                ++checked;
            }
        }
    }
    return fmt("%d runs, %d coordinates", static_cast<int>(g_runs.size()), checked);
}

// ---------------------------------------------------------------------------
// 4. Corner mixing vectors are exact: lambda all-ones returns psi bit for
//    bit, all-zeros returns theta, and a mixed corner vector routes every
//    component to the matching parent. Signed zeros included.

std::string check_corner_identities() {
    const std::vector<std::pair<std::string, int>> schema = {{"a.w", 4}, {"a.b", 2}, {"c.w", 3}};
    const PartitionSpec spec =
        auto_partition({"a.w", "a.b", "c.w"}, 3, PartitionStrategy::ContiguousBlocks);

    for (int trial = 0; trial < 5; ++trial) {
        Rng rng(derive_seed(11, "corners", static_cast<std::uint64_t>(trial)));
        auto psi_entries = random_params(rng, schema).entries();
        auto theta_entries = random_params(rng, schema).entries();
        psi_entries[0].data[1] = -0.0f;  // the one value averaging would not preserve
        theta_entries[0].data[1] = 0.0f;
        theta_entries[2].data[0] = -0.0f;
        ParameterSet psi = ParameterSet::from_entries(std::move(psi_entries));
        ParameterSet theta = ParameterSet::from_entries(std::move(theta_entries));

        expect(same_bits(mix_components(psi, theta, spec, {1.0, 1.0, 1.0}), psi),
               "lambda=1 is not psi bit for bit");
        expect(same_bits(mix_components(psi, theta, spec, {0.0, 0.0, 0.0}), theta),
               "lambda=0 is not theta bit for bit");

        ParameterSet mixed = mix_components(psi, theta, spec, {1.0, 0.0, 1.0});
        for (std::size_t t = 0; t < mixed.size(); ++t) {
            const ParameterSet& parent = (t == 1) ? theta : psi;
            const auto& got = mixed.at(t).data;
            const auto& want = parent.at(t).data;
            for (std::size_t i = 0; i < got.size(); ++i) {
                expect(std::bit_cast<std::uint32_t>(got[i]) ==
                           std::bit_cast<std::uint32_t>(want[i]),
                       "mixed corner vector routed a component to the wrong parent");
            }
        }
    }
    return "5 trials, signed zeros preserved";
}

// ---------------------------------------------------------------------------
// 5. The uniform soup equals an independent elementwise mean, computed here
//    in long double, within 1e-6 relative.

std::string check_uniform_oracle() {
    Rng rng(derive_seed(23, "uniform-oracle"));
    const std::vector<std::pair<std::string, int>> schema = {
        {"fc1.weight", 17}, {"fc1.bias", 9}, {"head.weight", 5}};
    soups::ModelPool pool;
    for (int m = 0; m < 7; ++m) {
        pool.models.push_back({"m" + std::to_string(m), random_params(rng, schema),
                               std::nullopt});
    }
    auto [fused, report] = soups::uniform_soup(pool);
    expect(report.method == "uniform" && report.final_k == 7, "report header wrong");

    int checked = 0;
    for (std::size_t t = 0; t < fused.size(); ++t) {
        const auto& fd = fused.at(t).data;
        for (std::size_t i = 0; i < fd.size(); ++i) {
            long double acc = 0.0L;
            for (const auto& m : pool.models) acc += m.params.at(t).data[i];
            const double mean = static_cast<double>(acc / 7.0L);
            const double tol = 1e-6 * std::max(1.0, std::fabs(mean));
            expect(std::fabs(fd[i] - mean) <= tol, "fused value differs from independent mean");
            ++checked;
        }
    }
    return fmt("7 models, %d coordinates", checked);
}

// ---------------------------------------------------------------------------
// 6. The default solver recovers a planted interior optimum of
//    f(x) = -sum((x - c)^2), c in [0.2, 0.8]^8, on at least 18 of 20 seeds
//    to within 0.05 in the max norm, never exceeding the 250-call budget.

std::string check_optimizer_calibration() {
    auto t0 = Clock::now();
    int recovered = 0;
    double worst = 0.0;

    for (int s = 0; s < 20; ++s) {
        Rng rng(derive_seed(31, "calibration", static_cast<std::uint64_t>(s)));
        std::vector<double> c(8);
        for (auto& v : c) v = rng.uniform(0.2, 0.8);

        int calls = 0;
        dfo::OptimizationProblem p;
        p.dim = 8;
        p.fill_unit_box();
        p.initial.assign(8, 0.5);
        p.budget = 250;
        p.seed = static_cast<std::uint64_t>(s);
        p.objective = [&](const std::vector<double>& x) {
            ++calls;
            double sum = 0.0;
            for (int j = 0; j < 8; ++j) sum += (x[j] - c[j]) * (x[j] - c[j]);
            return -sum;
        };

        dfo::OptimizationResult res = dfo::optimize(p);
        expect(calls <= 250, fmt("seed %d spent %d calls", s, calls));
        expect(calls == res.evaluations, "evaluation count disagrees with objective calls");

        double gap = 0.0;
        for (int j = 0; j < 8; ++j) gap = std::max(gap, std::fabs(res.best_point[j] - c[j]));
        if (gap < 0.05) {
            ++recovered;
            worst = std::max(worst, gap);
        }
    }

    const double dt = seconds_since(t0);
    expect(recovered >= 18, fmt("only %d/20 optima recovered", recovered));
    expect(dt < 30.0, "calibration exceeded 30 s");
    return fmt("%d/20 recovered, worst gap %.4f, %.1fs", recovered, worst, dt);
}

// ---------------------------------------------------------------------------
// 7. Desk-scale reference run: train the eight-config pool on the default
//    synthetic task, soup it, and require (a) fused validation accuracy at or
//    above the best member and (b) average shifted-set accuracy within 0.005
//    of the best member, printing the signed delta.

std::string check_desk_scale() {
    auto t0 = Clock::now();

    bench::SyntheticTaskSpec spec;
    spec.seed = 1;
    const bench::TaskBundle task = bench::make_task(spec);
    const bench::TrainPoolResult trained = bench::train_pool(task, bench::reference_grid());
    expect(trained.failed_ids.empty(), "a reference config diverged");
    expect(trained.pool.size() == 8, "pool is not eight models");

    double best_val = -1.0;
    const soups::PoolModel* best = nullptr;
    for (const auto& m : trained.pool.models) {
        if (*m.val_acc > best_val) {
            best_val = *m.val_acc;
            best = &m;
        }
    }

    bench::BenchEvaluator eval(task);
    const PartitionSpec part = auto_partition(trained.pool.models[0].params.tensor_names(), 8,
                                              PartitionStrategy::ContiguousBlocks);
    auto [fused, report] = soups::manifold_mix_soup(trained.pool, part, eval);

    expect(report.final_val_acc.has_value(), "missing fused validation accuracy");
    expect(*report.final_val_acc >= best_val, "fused validation below best member");

    const double fused_ood = bench::evaluate_ood(fused, task, "soup").avg_ood;
    const double best_ood = bench::evaluate_ood(best->params, task, best->id).avg_ood;
    const double delta = fused_ood - best_ood;
    expect(delta >= -0.005, fmt("avg shifted accuracy delta %+.4f below -0.005", delta));

    fs::path ckpt = scratch() / "desk-fused.bin";
    save_checkpoint(fused, {}, ckpt);
    g_desk_ckpt = read_bytes(ckpt);
    g_desk_report = report.to_json();

    const double dt = seconds_since(t0);
    expect(dt < 300.0, "desk-scale run exceeded 5 min");
    return fmt("val %.4f vs best %.4f, ood delta %+.4f, k=%d, %.0fs", *report.final_val_acc,
               best_val, delta, report.final_k, dt);
}

// ---------------------------------------------------------------------------
// 8. Repeating the desk-scale run with the same seeds reproduces the fused
//    checkpoint and the report byte for byte.

std::string check_determinism() {
    expect(!g_desk_ckpt.empty(), "no stored desk-scale artifacts (previous check failed)");

    bench::SyntheticTaskSpec spec;
    spec.seed = 1;
    const bench::TaskBundle task = bench::make_task(spec);
    const bench::TrainPoolResult trained = bench::train_pool(task, bench::reference_grid());
    bench::BenchEvaluator eval(task);
    const PartitionSpec part = auto_partition(trained.pool.models[0].params.tensor_names(), 8,
                                              PartitionStrategy::ContiguousBlocks);
    auto [fused, report] = soups::manifold_mix_soup(trained.pool, part, eval);

    fs::path ckpt = scratch() / "desk-fused-again.bin";
    save_checkpoint(fused, {}, ckpt);
    expect(read_bytes(ckpt) == g_desk_ckpt, "fused checkpoints differ between runs");
    expect(report.to_json() == g_desk_report, "reports differ between runs");
    return fmt("%zu checkpoint bytes identical", g_desk_ckpt.size());
}

// ---------------------------------------------------------------------------
// 9. Checkpoint format: save/load roundtrips 100 randomized schemas bit for
//    bit; truncated files, overlapping records and non-finite payloads raise
//    their designated errors.

template <typename E>
void expect_error(const std::function<void()>& body, const std::string& label,
                  const std::string& needle = "") {
    try {
        body();
    } catch (const E& e) {
        expect(needle.empty() || std::string(e.what()).find(needle) != std::string::npos,
               label + ": message lacks '" + needle + "'");
        return;
    } catch (const std::exception& e) {
        throw std::runtime_error(label + ": wrong error type: " + e.what());
    }
    throw std::runtime_error(label + ": no error raised");
}

std::string check_checkpoint_format() {
    const fs::path dir = scratch();
    const std::vector<std::string> stems = {"enc", "dec", "mid", "head", "emb", "norm"};
    const std::vector<std::string> leaves = {"weight", "bias", "gain"};

    fs::path last;
    for (int i = 0; i < 100; ++i) {
        Rng rng(derive_seed(47, "roundtrip", static_cast<std::uint64_t>(i)));
        std::set<std::string> used;
        std::vector<TensorEntry> entries;
        const int tensors = 1 + static_cast<int>(rng.below(6));
        for (int t = 0; t < tensors; ++t) {
            std::string name;
            do {
                name = stems[rng.below(stems.size())] + std::to_string(rng.below(4)) + "." +
                       leaves[rng.below(leaves.size())];
            } while (!used.insert(name).second);
            TensorEntry e;
            e.name = name;
            const int rank = 1 + static_cast<int>(rng.below(3));
            std::size_t numel = 1;
            for (int d = 0; d < rank; ++d) {
                e.shape.push_back(1 + static_cast<int64_t>(rng.below(5)));
                numel *= static_cast<std::size_t>(e.shape.back());
            }
            e.data.resize(numel);
            for (auto& v : e.data) {
                switch (rng.below(12)) {
                    case 0: v = 0.0f; break;
                    case 1: v = -0.0f; break;
                    case 2: v = std::ldexp(1.0f, -140); break;  // subnormal
                    case 3: v = 2.5e38f; break;
                    default: v = static_cast<float>(rng.uniform(-2.0, 2.0));
                }
            }
            entries.push_back(std::move(e));
        }
        std::map<std::string, std::string> meta;
        const std::uint64_t meta_count = rng.below(3);
        for (std::uint64_t m = 0; m < meta_count; ++m) {
            meta["key" + std::to_string(m)] = "value" + std::to_string(rng.below(100));
        }

        ParameterSet ps = ParameterSet::from_entries(entries);
        fs::path file = dir / ("roundtrip-" + std::to_string(i) + ".bin");
        save_checkpoint(ps, meta, file);
        Checkpoint back = load_checkpoint(file);
        expect(back.metadata == meta, "metadata did not roundtrip");
        expect(same_bits(back.params, ps), "payload did not roundtrip bit for bit");
        last = file;
    }

    // truncations at three depths
    const std::string good = read_bytes(last);
    write_bytes(dir / "trunc-tail.bin", good.substr(0, good.size() - 3));
    write_bytes(dir / "trunc-header.bin", good.substr(0, 10));
    write_bytes(dir / "trunc-manifest.bin", good.substr(0, 16));
    expect_error<CorruptHeaderError>([&] { load_checkpoint(dir / "trunc-tail.bin"); },
                                     "payload truncation");
    expect_error<CorruptHeaderError>([&] { load_checkpoint(dir / "trunc-header.bin"); },
                                     "header truncation", "too short");
    expect_error<CorruptHeaderError>([&] { load_checkpoint(dir / "trunc-manifest.bin"); },
                                     "manifest truncation");

    // hand-built manifest whose second record overlaps the first
    nlohmann::json overlap = {
        {"format_version", 1},
        {"tensors",
         {{{"name", "a"}, {"shape", {2}}, {"dtype", "f32"}, {"offset", 0}, {"nbytes", 8}},
          {{"name", "b"}, {"shape", {2}}, {"dtype", "f32"}, {"offset", 0}, {"nbytes", 8}}}},
        {"metadata", nlohmann::json::object()}};
    std::string header = overlap.dump();
    std::string bytes = "SOUPCKPT";
    const std::uint32_t hlen = static_cast<std::uint32_t>(header.size());
    bytes.append(reinterpret_cast<const char*>(&hlen), 4);
    bytes += header;
    const float payload[2] = {1.0f, 2.0f};
    bytes.append(reinterpret_cast<const char*>(payload), 8);
    write_bytes(dir / "overlap.bin", bytes);
    expect_error<CorruptHeaderError>([&] { load_checkpoint(dir / "overlap.bin"); },
                                     "record overlap", "overlap");

    // valid file whose first payload float is patched to a NaN
    {
        TensorEntry e{"w", {2}, {1.0f, 2.0f}};
        save_checkpoint(ParameterSet::from_entries({e}), {}, dir / "nan.bin");
        std::string raw = read_bytes(dir / "nan.bin");
        std::uint32_t h = 0;
        std::memcpy(&h, raw.data() + 8, 4);
        const std::uint32_t nan_bits = 0x7fc00000u;
        std::memcpy(raw.data() + 12 + h, &nan_bits, 4);
        write_bytes(dir / "nan.bin", raw);
    }
    expect_error<NonFiniteError>([&] { load_checkpoint(dir / "nan.bin"); }, "NaN payload");

    return "100 schemas, 5 malformed files rejected";
}

}  // namespace

int main() {
    struct Check {
        const char* name;
        std::function<std::string()> body;
    };
    const std::vector<Check> checks = {
        {"scripted pool replays the documented decision trace", check_scripted_trace},
        {"soups never finish below the best pool member", check_monotonicity},
        {"fused parameters stay inside the ingredient hull", check_hull_containment},
        {"corner mixing vectors return a parent bit for bit", check_corner_identities},
        {"uniform soup matches an independent elementwise mean", check_uniform_oracle},
        {"optimizer recovers planted optima within budget", check_optimizer_calibration},
        {"desk-scale soup holds validation and shifted accuracy", check_desk_scale},
        {"repeated desk-scale runs are bitwise identical", check_determinism},
        {"checkpoint format roundtrips and rejects malformed files", check_checkpoint_format},
    };

    int failed = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        std::string line;
        try {
            std::string detail = checks[i].body();
            line = fmt("PASS %zu/9 %s", i + 1, checks[i].name);
            if (!detail.empty()) line += "  [" + detail + "]";
        } catch (const std::exception& e) {
            ++failed;
            line = fmt("FAIL %zu/9 %s: %s", i + 1, checks[i].name, e.what());
        }
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
    }
    if (failed == 0) {
        std::printf("all 9 checks passed\n");
    } else {
        std::printf("%d of 9 checks failed\n", failed);
    }
    return failed;
}
