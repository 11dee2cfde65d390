// soupkit: generate synthetic tasks, train model pools, build soups,
// evaluate checkpoints and emit accuracy tables.
//
// Exit codes: 0 success, 1 usage, 2 data/schema error, 3 numeric failure.
// All randomness flows from --seed, fanned out per use as
// derive_seed(seed, "<subcommand or use label>", index).

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "soupkit/bench.hpp"
#include "soupkit/dfo.hpp"
#include "soupkit/partition.hpp"
#include "soupkit/report.hpp"
#include "soupkit/rng.hpp"
#include "soupkit/soups.hpp"
#include "soupkit/tensor_store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace soupkit;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
    if (!out.flush()) throw IoError("write failed for " + path.string());
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const soups::SoupAbortError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NonFiniteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ObjectiveError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const InvalidArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

struct MakeTaskArgs {
    std::string out;
    std::string spec_file;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string generator;
    int classes = -1, dim = -1, train = -1, val = -1, test = -1;
};

int cmd_make_task(const MakeTaskArgs& a) {
    bench::SyntheticTaskSpec spec;
    if (!a.spec_file.empty()) spec = bench::SyntheticTaskSpec::from_json(read_text(a.spec_file));
    if (a.seed_set || a.spec_file.empty()) spec.seed = derive_seed(a.seed, "make-task");
    if (!a.generator.empty()) spec.generator = a.generator;
    if (a.classes >= 0) spec.classes = a.classes;
    if (a.dim >= 0) spec.input_dim = a.dim;
    if (a.train >= 0) spec.train_count = a.train;
    if (a.val >= 0) spec.val_count = a.val;
    if (a.test >= 0) spec.test_count = a.test;

    bench::TaskBundle bundle = bench::make_task(spec);
    bench::save_task(bundle, a.out);
    std::cout << (fs::path(a.out) / "descriptor.json").string() << "\n";
    return 0;
}

struct TrainPoolArgs {
    std::string task;
    std::string out;
    std::string grid_file;
    std::uint64_t seed = 0;
};

int cmd_train_pool(const TrainPoolArgs& a) {
    bench::TaskBundle task = bench::load_task(a.task);
    std::vector<bench::TrainConfig> grid = a.grid_file.empty()
                                               ? bench::reference_grid()
                                               : bench::grid_from_json(read_text(a.grid_file));
    if (grid.empty()) throw InvalidArgumentError("train-pool: empty config grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i].id.empty()) grid[i].id = "cfg" + std::to_string(i);
        grid[i].seed = derive_seed(a.seed, "train-pool:" + grid[i].id, grid[i].seed);
    }

    bench::TrainPoolResult result = bench::train_pool(task, grid);
    for (const auto& id : result.failed_ids)
        std::cerr << "warning: config '" << id << "' diverged and was excluded\n";
    if (result.pool.models.empty()) throw NonFiniteError("train-pool: every config diverged");

    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw IoError("cannot create directory " + a.out);

    json models = json::array();
    for (const auto& m : result.pool.models) {
        std::string file = "ckpt-" + m.id + ".bin";
        const bench::TrainConfig* cfg = nullptr;
        for (const auto& c : grid)
            if (c.id == m.id) cfg = &c;
        save_checkpoint(m.params, bench::config_metadata(*cfg, *m.val_acc), fs::path(a.out) / file);
        models.push_back({{"id", m.id}, {"file", file}, {"val_acc", *m.val_acc}});
    }
    json manifest{{"format_version", 1},
                  {"task", a.task},
                  {"models", models},
                  {"failed", result.failed_ids}};
    write_text(fs::path(a.out) / "pool.json", manifest.dump(2));
    std::cout << (fs::path(a.out) / "pool.json").string() << "\n";
    return 0;
}

soups::ModelPool load_pool(const fs::path& dir) {
    json manifest = json::parse(read_text(dir / "pool.json"), nullptr, false);
    if (manifest.is_discarded())
        throw CorruptHeaderError("pool manifest " + (dir / "pool.json").string() +
                                 ": not valid JSON");
    soups::ModelPool pool;
    try {
        for (const auto& m : manifest.at("models")) {
            soups::PoolModel model;
            model.id = m.at("id").get<std::string>();
            model.params = load_params(dir / m.at("file").get<std::string>());
            if (m.contains("val_acc") && !m.at("val_acc").is_null())
                model.val_acc = m.at("val_acc").get<double>();
            pool.models.push_back(std::move(model));
        }
    } catch (const json::exception& e) {
        throw CorruptHeaderError("pool manifest " + (dir / "pool.json").string() + ": " + e.what());
    }
    return pool;
}

struct SoupArgs {
    std::string pool;
    std::string out;
    std::string method;
    std::string task;
    std::string partition_file;
    std::string auto_spec;
    double tau = 0.998;
    int budget = 250;
    std::string solver = "cobyla";
    std::uint64_t seed = 0;
    // which tuning flags were given explicitly, for ignored-flag warnings
    bool tau_set = false, budget_set = false, solver_set = false;
};

PartitionSpec resolve_partition(const SoupArgs& a, const std::vector<std::string>& schema) {
    if (!a.partition_file.empty()) return load_partition(a.partition_file);
    auto colon = a.auto_spec.find(':');
    if (colon == std::string::npos)
        throw InvalidArgumentError("--auto expects M:STRATEGY, got '" + a.auto_spec + "'");
    int m = 0;
    try {
        std::size_t used = 0;
        m = std::stoi(a.auto_spec.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw InvalidArgumentError("--auto expects an integer component count, got '" +
                                   a.auto_spec.substr(0, colon) + "'");
    }
    return auto_partition(schema, m, parse_strategy(a.auto_spec.substr(colon + 1)));
}

int cmd_soup(const SoupArgs& a) {
    if (a.method != "uniform" && a.method != "greedy" && a.method != "manifold")
        throw InvalidArgumentError("--method must be uniform, greedy or manifold");

    const bool needs_eval = a.method != "uniform";
    if (needs_eval && a.task.empty())
        throw InvalidArgumentError("--method " + a.method + " needs --task for validation accuracy");
    if (a.method == "manifold") {
        if (a.partition_file.empty() == a.auto_spec.empty())
            throw InvalidArgumentError(
                "--method manifold needs exactly one of --partition or --auto");
    } else {
        if (!a.partition_file.empty() || !a.auto_spec.empty())
            std::cerr << "warning: --partition/--auto ignored for method " << a.method << "\n";
        if (a.budget_set) std::cerr << "warning: --budget ignored for method " << a.method << "\n";
        if (a.solver_set) std::cerr << "warning: --solver ignored for method " << a.method << "\n";
        if (a.tau_set && a.method == "uniform")
            std::cerr << "warning: --tau ignored for method uniform\n";
    }

    soups::ModelPool pool = load_pool(a.pool);

    std::optional<bench::TaskBundle> task;
    std::optional<bench::BenchEvaluator> eval;
    if (!a.task.empty()) {
        task = bench::load_task(a.task);
        eval.emplace(*task, a.task + ":val");
    }

    ParameterSet fused;
    soups::SoupReport report;
    if (a.method == "uniform") {
        std::tie(fused, report) = soups::uniform_soup(pool);
    } else if (a.method == "greedy") {
        std::tie(fused, report) = soups::greedy_soup(pool, *eval);
    } else {
        PartitionSpec part = resolve_partition(a, pool.models.at(0).params.tensor_names());
        soups::ManifoldOptions options;
        options.tau = a.tau;
        options.budget = a.budget;
        options.solver = dfo::parse_solver(a.solver);
        options.seed = derive_seed(a.seed, "soup");
        std::tie(fused, report) = soups::manifold_mix_soup(pool, part, *eval, options);
    }

    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw IoError("cannot create directory " + a.out);

    fs::path ckpt_path = fs::path(a.out) / "fused.bin";
    report.checkpoint_path = ckpt_path.string();
    std::map<std::string, std::string> meta{{"method", a.method},
                                            {"final_k", std::to_string(report.final_k)}};
    if (report.final_val_acc) meta["final_val_acc"] = json(*report.final_val_acc).dump();
    save_checkpoint(fused, meta, ckpt_path);
    write_text(fs::path(a.out) / "soup-report.json", report.to_json());
    std::cout << (fs::path(a.out) / "soup-report.json").string() << "\n";
    return 0;
}

struct EvalArgs {
    std::string ckpt;
    std::string task;
    std::string label;
    std::string out;
    std::string format = "json";
};

int cmd_eval(const EvalArgs& a) {
    ParameterSet params = load_params(a.ckpt);
    bench::TaskBundle task = bench::load_task(a.task);
    std::string label = a.label.empty() ? fs::path(a.ckpt).stem().string() : a.label;
    bench::EvalResult result = bench::evaluate_ood(params, task, label);

    std::string text = a.format == "md" ? report::to_markdown(report::build_table({result}))
                                        : result.to_json();
    std::cout << text;
    if (!a.out.empty()) write_text(a.out, text);
    return 0;
}

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string out;
    std::string format = "md";
};

int cmd_report(const ReportArgs& a) {
    std::vector<std::string> missing;
    for (const auto& in : a.inputs)
        if (!fs::exists(in)) missing.push_back(in);
    if (!missing.empty()) {
        std::string joined;
        for (const auto& m : missing) joined += (joined.empty() ? "" : ", ") + m;
        throw IoError("missing inputs: " + joined);
    }

    std::vector<bench::EvalResult> results;
    for (const auto& in : a.inputs) results.push_back(bench::EvalResult::from_json(read_text(in)));

    report::Table table = report::build_table(results);
    std::string text = a.format == "json" ? report::to_json(table) : report::to_markdown(table);
    std::cout << text;
    if (!a.out.empty()) write_text(a.out, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"model soup toolkit: synthetic tasks, training pools, soups, reports"};
    app.require_subcommand(1);

    MakeTaskArgs mt;
    auto* make_task = app.add_subcommand("make-task", "generate a synthetic dataset bundle");
    make_task->add_option("--out", mt.out, "bundle output directory")->required();
    make_task->add_option("--spec", mt.spec_file, "task spec JSON file");
    make_task->add_option("--seed", mt.seed, "base seed (task seed = derive(seed, \"make-task\"))");
    make_task->add_option("--generator", mt.generator, "gaussian-blobs or two-spirals");
    make_task->add_option("--classes", mt.classes, "number of classes");
    make_task->add_option("--dim", mt.dim, "input dimension");
    make_task->add_option("--train", mt.train, "train split size");
    make_task->add_option("--val", mt.val, "validation split size");
    make_task->add_option("--test", mt.test, "test split size");

    TrainPoolArgs tp;
    auto* train_pool = app.add_subcommand("train-pool", "train a model pool over a config grid");
    train_pool->add_option("--task", tp.task, "dataset bundle directory")->required();
    train_pool->add_option("--out", tp.out, "pool output directory")->required();
    train_pool->add_option("--grid", tp.grid_file, "config grid JSON (default: built-in 8-config grid)");
    train_pool->add_option("--seed", tp.seed,
                           "base seed (per config: derive(seed, \"train-pool:<id>\", config seed))");

    SoupArgs sp;
    auto* soup = app.add_subcommand("soup", "fuse a pool into a single model");
    soup->add_option("--pool", sp.pool, "pool directory (from train-pool)")->required();
    soup->add_option("--out", sp.out, "output directory for fused.bin + soup-report.json")->required();
    soup->add_option("--method", sp.method, "uniform, greedy or manifold")->required();
    soup->add_option("--task", sp.task, "dataset bundle (validation split drives the soup)");
    soup->add_option("--partition", sp.partition_file, "partition spec JSON");
    soup->add_option("--auto", sp.auto_spec,
                     "auto partition M:STRATEGY (contiguous-blocks or by-name-prefix)");
    soup->add_option("--tau", sp.tau, "approx-average gate threshold")->capture_default_str();
    soup->add_option("--budget", sp.budget, "objective evaluations per optimizer call")
        ->capture_default_str();
    soup->add_option("--solver", sp.solver, "cobyla or nelder-mead")->capture_default_str();
    soup->add_option("--seed", sp.seed, "base seed (optimizer seed = derive(seed, \"soup\"))");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on clean + shifted sets");
    eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--task", ev.task, "dataset bundle directory")->required();
    eval_cmd->add_option("--label", ev.label, "row label (default: checkpoint stem)");
    eval_cmd->add_option("--out", ev.out, "also write the result here");
    eval_cmd->add_option("--format", ev.format, "json or md")
        ->check(CLI::IsMember({"json", "md"}))
        ->capture_default_str();

    ReportArgs rp;
    auto* report_cmd = app.add_subcommand("report", "aggregate eval results into one table");
    report_cmd->add_option("--in", rp.inputs, "eval result JSON files (row order)")->required();
    report_cmd->add_option("--out", rp.out, "also write the table here");
    report_cmd->add_option("--format", rp.format, "md or json")
        ->check(CLI::IsMember({"json", "md"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    mt.seed_set = make_task->count("--seed") > 0;
    sp.tau_set = soup->count("--tau") > 0;
    sp.budget_set = soup->count("--budget") > 0;
    sp.solver_set = soup->count("--solver") > 0;

    if (make_task->parsed()) return guarded([&] { return cmd_make_task(mt); });
    if (train_pool->parsed()) return guarded([&] { return cmd_train_pool(tp); });
    if (soup->parsed()) return guarded([&] { return cmd_soup(sp); });
    if (eval_cmd->parsed()) return guarded([&] { return cmd_eval(ev); });
    if (report_cmd->parsed()) return guarded([&] { return cmd_report(rp); });
    return 1;
}
