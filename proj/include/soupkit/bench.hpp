#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "soupkit/soups.hpp"
#include "soupkit/tensor_store.hpp"

namespace soupkit::bench {

// One synthetic distribution shift, parameterized by a single magnitude.
// Magnitude 0 is always the identity transform, bit for bit.
//   rotation   angle in degrees, applied in consecutive coordinate planes
//   noise      sigma of additive Gaussian noise
//   dropout    probability of zeroing each feature
//   scale      relative global scaling, x * (1 + magnitude)
//   blur       blend weight toward a random same-label example
struct ShiftSpec {
    std::string id;
    double magnitude = 0.0;
};

std::vector<ShiftSpec> default_shift_suite();

struct SyntheticTaskSpec {
    std::string generator = "gaussian-blobs";  // or "two-spirals"
    int input_dim = 6;
    int classes = 4;
    int train_count = 2000;
    int val_count = 500;
    int test_count = 625;
    std::uint64_t seed = 0;
    std::vector<ShiftSpec> shifts = default_shift_suite();

    std::string to_json() const;
    static SyntheticTaskSpec from_json(const std::string& text);
};

struct Dataset {
    int dim = 0;
    int classes = 0;
    std::vector<float> x;       // row-major [count, dim]
    std::vector<int32_t> y;     // [count]

    int count() const { return dim == 0 ? 0 : static_cast<int>(y.size()); }
};

struct TaskBundle {
    SyntheticTaskSpec spec;
    Dataset train;
    Dataset val;
    Dataset test;
    // one entry per spec.shifts element, same order
    std::vector<std::pair<std::string, Dataset>> shifted;
};

// Deterministic generation: same spec (including seed) gives identical bytes.
// Train, validation and test are drawn from disjoint generator streams; the
// shifted sets transform test features only, so sizes and labels match the
// clean test set. Throws InvalidArgumentError on a degenerate spec.
TaskBundle make_task(const SyntheticTaskSpec& spec);

// Applies one shift to a dataset (used on the clean test set). Exposed for
// tests; magnitude 0 returns an identical copy.
Dataset apply_shift(const Dataset& d, const ShiftSpec& shift, std::uint64_t seed);

// Bundle directory layout: descriptor.json plus one tensor file per split
// ("x" f32 [count, dim], "y" f32 [count]), same binary format as checkpoints.
void save_task(const TaskBundle& bundle, const std::filesystem::path& dir);
TaskBundle load_task(const std::filesystem::path& dir);

// Feed-forward classifier: input -> tanh hidden stack -> linear head.
// Tensor schema, in order: fc1.weight [h1, in], fc1.bias [h1], ..., then
// head.weight [classes, h_last], head.bias [classes].
struct MlpShape {
    int input_dim = 0;
    std::vector<int> hidden;
    int classes = 0;
};

// Default pool architecture; three hidden layers give the schema eight
// tensors, so every component granularity used in the reports is reachable.
MlpShape reference_shape(int input_dim, int classes);

ParameterSet init_mlp(const MlpShape& shape, std::uint64_t seed);

// Recovers the architecture from a parameter schema; throws
// SchemaMismatchError when the tensors do not form an MLP of this layout.
MlpShape shape_of(const ParameterSet& params);

// Logits for every row of x; rows*classes output, pure function.
std::vector<float> mlp_forward(const ParameterSet& params, const std::vector<float>& x, int rows);

// Top-1 accuracy of params on the dataset. Deterministic, thread-count
// independent. Throws SchemaMismatchError when the schema does not fit the
// dataset's dim/classes.
double evaluate(const ParameterSet& params, const Dataset& dataset);

struct EvalResult {
    std::string label;
    double clean = 0.0;
    std::vector<std::pair<std::string, double>> per_shift;
    double avg_ood = 0.0;  // unweighted mean of per_shift accuracies

    std::string to_json() const;
    static EvalResult from_json(const std::string& text);
};

// Clean test accuracy plus one accuracy per shifted set, in suite order.
EvalResult evaluate_ood(const ParameterSet& params, const TaskBundle& task,
                        const std::string& label = "");

struct TrainConfig {
    std::string id;
    std::vector<int> hidden;
    double lr = 0.05;
    double weight_decay = 0.0;
    int epochs = 40;
    int batch = 64;
    double aug_noise = 0.0;  // sigma of Gaussian input noise during training
    std::uint64_t seed = 0;
    std::string init_id = "shared-0";
    bool linear_probe = true;
};

// Eight-config grid varying learning rate, weight decay, augmentation noise
// and seed around sensible desk-scale defaults.
std::vector<TrainConfig> reference_grid();

std::string grid_to_json(const std::vector<TrainConfig>& grid);
std::vector<TrainConfig> grid_from_json(const std::string& text);

struct TrainOutcome {
    TrainConfig config;
    ParameterSet params;
    double val_acc = 0.0;
    bool failed = false;  // training diverged (non-finite loss or weights)
};

// Minibatch SGD with weight decay on cross-entropy. Starting point is the
// shared init passed in; config.seed drives shuffling and augmentation only.
// A diverged run comes back with failed=true instead of throwing.
TrainOutcome train_one(const TaskBundle& task, const TrainConfig& config,
                       const ParameterSet& init);

struct TrainPoolResult {
    soups::ModelPool pool;
    std::vector<std::string> failed_ids;
    ParameterSet shared_init;
};

// Builds the shared initialization (optionally with the final layer fitted on
// the frozen random features first), then trains every config from it.
// Configs must agree on architecture, init id and the probe toggle. Diverged
// configs are excluded from the pool and listed in failed_ids.
TrainPoolResult train_pool(const TaskBundle& task, const std::vector<TrainConfig>& grid);

// Checkpoint metadata for a trained model: the config fields plus its
// validation accuracy, all as strings.
std::map<std::string, std::string> config_metadata(const TrainConfig& config, double val_acc);

// soups::Evaluator measuring accuracy on the task's validation split.
class BenchEvaluator : public soups::Evaluator {
public:
    explicit BenchEvaluator(const TaskBundle& task, std::string id = "")
        : task_(task), id_(std::move(id)) {}

    double val_acc(const ParameterSet& params) override { return evaluate(params, task_.val); }
    std::string dataset_id() const override { return id_.empty() ? "val" : id_; }

private:
    const TaskBundle& task_;
    std::string id_;
};

}  // namespace soupkit::bench
