#include "soupkit/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "soupkit/kernels.hpp"
#include "soupkit/rng.hpp"

namespace soupkit::bench {

using nlohmann::json;

namespace {

constexpr double kBlobSpread = 2.0;
constexpr double kBlobSigma = 0.9;

const char* kShiftIds[] = {"rotation", "noise", "dropout", "scale", "blur"};

bool known_shift(const std::string& id) {
    for (const char* s : kShiftIds)
        if (id == s) return true;
    return false;
}

void validate_shift(const ShiftSpec& s) {
    if (!known_shift(s.id))
        throw InvalidArgumentError("unknown shift id '" + s.id + "'");
    double m = s.magnitude;
    if (!std::isfinite(m)) throw InvalidArgumentError("shift '" + s.id + "': non-finite magnitude");
    if (s.id == "noise" && m < 0.0)
        throw InvalidArgumentError("shift 'noise': magnitude must be >= 0");
    if ((s.id == "dropout" || s.id == "blur") && (m < 0.0 || m > 1.0))
        throw InvalidArgumentError("shift '" + s.id + "': magnitude must be in [0, 1]");
    if (s.id == "scale" && m <= -1.0)
        throw InvalidArgumentError("shift 'scale': magnitude must be > -1");
}

void validate_spec(const SyntheticTaskSpec& spec) {
    if (spec.generator != "gaussian-blobs" && spec.generator != "two-spirals")
        throw InvalidArgumentError("unknown generator '" + spec.generator + "'");
    if (spec.classes < 2) throw InvalidArgumentError("task needs at least 2 classes");
    int min_dim = spec.generator == "two-spirals" ? 2 : 1;
    if (spec.input_dim < min_dim)
        throw InvalidArgumentError("input_dim too small for generator " + spec.generator);
    if (spec.generator == "two-spirals" && spec.classes != 2)
        throw InvalidArgumentError("two-spirals generates exactly 2 classes");
    if (spec.train_count < 1 || spec.val_count < 1 || spec.test_count < 1)
        throw InvalidArgumentError("every split needs at least one example");
    std::vector<std::string> ids;
    for (const auto& s : spec.shifts) {
        validate_shift(s);
        if (std::find(ids.begin(), ids.end(), s.id) != ids.end())
            throw InvalidArgumentError("duplicate shift id '" + s.id + "'");
        ids.push_back(s.id);
    }
}

Dataset gen_blobs(const SyntheticTaskSpec& spec, const std::vector<std::vector<double>>& centers,
                  std::uint64_t seed, int count) {
    Dataset d;
    d.dim = spec.input_dim;
    d.classes = spec.classes;
    d.x.resize(static_cast<std::size_t>(count) * spec.input_dim);
    d.y.resize(count);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        int label = i % spec.classes;
        d.y[i] = label;
        for (int k = 0; k < spec.input_dim; ++k)
            d.x[static_cast<std::size_t>(i) * spec.input_dim + k] =
                static_cast<float>(centers[label][k] + kBlobSigma * rng.normal());
    }
    return d;
}

Dataset gen_spirals(const SyntheticTaskSpec& spec, std::uint64_t seed, int count) {
    constexpr double kPi = 3.14159265358979323846;
    Dataset d;
    d.dim = spec.input_dim;
    d.classes = 2;
    d.x.resize(static_cast<std::size_t>(count) * spec.input_dim);
    d.y.resize(count);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        int label = i % 2;
        d.y[i] = label;
        double t = rng.uniform(0.4 * kPi, 3.2 * kPi);
        double r = 0.55 * t / kPi;
        double a = t + label * kPi;
        float* row = d.x.data() + static_cast<std::size_t>(i) * spec.input_dim;
        row[0] = static_cast<float>(r * std::cos(a) + 0.1 * rng.normal());
        row[1] = static_cast<float>(r * std::sin(a) + 0.1 * rng.normal());
        for (int k = 2; k < spec.input_dim; ++k)
            row[k] = static_cast<float>(0.3 * rng.normal());
    }
    return d;
}

// Class centers come in antipodal pairs (+v, -v), so a 2-class task is
// centrally symmetric and large rotations genuinely confuse classes.
std::vector<std::vector<double>> blob_centers(const SyntheticTaskSpec& spec) {
    Rng rng(derive_seed(spec.seed, "centers"));
    std::vector<std::vector<double>> centers(spec.classes);
    for (int j = 0; j < spec.classes; j += 2) {
        std::vector<double> v(spec.input_dim);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& c : v) {
                c = rng.normal();
                norm += c * c;
            }
            norm = std::sqrt(norm);
        } while (norm < 1e-9);
        for (double& c : v) c *= kBlobSpread / norm;
        centers[j] = v;
        if (j + 1 < spec.classes) {
            centers[j + 1] = v;
            for (double& c : centers[j + 1]) c = -c;
        }
    }
    return centers;
}

void require_dataset(const Dataset& d, const char* what) {
    if (d.dim < 1 || d.y.empty() ||
        d.x.size() != d.y.size() * static_cast<std::size_t>(d.dim))
        throw InvalidArgumentError(std::string(what) + ": malformed dataset");
}

json spec_to_json_obj(const SyntheticTaskSpec& spec) {
    json shifts = json::array();
    for (const auto& s : spec.shifts) shifts.push_back({{"id", s.id}, {"magnitude", s.magnitude}});
    return json{{"generator", spec.generator},
                {"input_dim", spec.input_dim},
                {"classes", spec.classes},
                {"train_count", spec.train_count},
                {"val_count", spec.val_count},
                {"test_count", spec.test_count},
                {"seed", spec.seed},
                {"shifts", shifts}};
}

SyntheticTaskSpec spec_from_json_obj(const json& j) {
    SyntheticTaskSpec spec;
    try {
        spec.generator = j.at("generator").get<std::string>();
        spec.input_dim = j.at("input_dim").get<int>();
        spec.classes = j.at("classes").get<int>();
        spec.train_count = j.at("train_count").get<int>();
        spec.val_count = j.at("val_count").get<int>();
        spec.test_count = j.at("test_count").get<int>();
        spec.seed = j.at("seed").get<std::uint64_t>();
        spec.shifts.clear();
        for (const auto& s : j.at("shifts")) {
            ShiftSpec sh;
            sh.id = s.at("id").get<std::string>();
            sh.magnitude = s.at("magnitude").get<double>();
            spec.shifts.push_back(sh);
        }
    } catch (const json::exception& e) {
        throw SchemaMismatchError(std::string("task spec JSON: ") + e.what());
    }
    return spec;
}

void save_split(const Dataset& d, const std::filesystem::path& path, const std::string& split) {
    std::vector<TensorEntry> entries(2);
    entries[0].name = "x";
    entries[0].shape = {static_cast<int64_t>(d.y.size()), d.dim};
    entries[0].data = d.x;
    entries[1].name = "y";
    entries[1].shape = {static_cast<int64_t>(d.y.size())};
    entries[1].data.reserve(d.y.size());
    for (int32_t label : d.y) entries[1].data.push_back(static_cast<float>(label));
    save_checkpoint(ParameterSet::from_entries(std::move(entries)), {{"split", split}}, path);
}

Dataset load_split(const std::filesystem::path& path, int classes) {
    ParameterSet ps = load_params(path);
    if (!ps.has("x") || !ps.has("y") || ps.size() != 2)
        throw SchemaMismatchError("dataset blob " + path.string() + ": expected tensors x, y");
    const TensorEntry& x = ps.at("x");
    const TensorEntry& y = ps.at("y");
    if (x.shape.size() != 2 || y.shape.size() != 1 || x.shape[0] != y.shape[0])
        throw SchemaMismatchError("dataset blob " + path.string() + ": bad tensor shapes");
    Dataset d;
    d.dim = static_cast<int>(x.shape[1]);
    d.classes = classes;
    d.x = x.data;
    d.y.reserve(y.data.size());
    for (float v : y.data) {
        auto label = static_cast<int32_t>(std::lround(v));
        if (static_cast<float>(label) != v || label < 0 || label >= classes)
            throw SchemaMismatchError("dataset blob " + path.string() + ": label out of range");
        d.y.push_back(label);
    }
    return d;
}

}  // namespace

std::vector<ShiftSpec> default_shift_suite() {
    return {{"rotation", 35.0}, {"noise", 0.9}, {"dropout", 0.35}, {"scale", 0.6}, {"blur", 0.5}};
}

std::string SyntheticTaskSpec::to_json() const { return spec_to_json_obj(*this).dump(2) + "\n"; }

SyntheticTaskSpec SyntheticTaskSpec::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw SchemaMismatchError("task spec JSON: parse error");
    return spec_from_json_obj(j);
}

Dataset apply_shift(const Dataset& d, const ShiftSpec& shift, std::uint64_t seed) {
    require_dataset(d, "apply_shift");
    validate_shift(shift);
    Dataset out = d;
    double m = shift.magnitude;
    if (m == 0.0) return out;

    std::size_t n = d.y.size();
    auto dim = static_cast<std::size_t>(d.dim);
    if (shift.id == "rotation") {
        double rad = m * 3.14159265358979323846 / 180.0;
        double c = std::cos(rad), s = std::sin(rad);
        for (std::size_t i = 0; i < n; ++i) {
            float* row = out.x.data() + i * dim;
            for (std::size_t k = 0; k + 1 < dim; k += 2) {
                double a = row[k], b = row[k + 1];
                row[k] = static_cast<float>(c * a - s * b);
                row[k + 1] = static_cast<float>(s * a + c * b);
            }
        }
    } else if (shift.id == "noise") {
        Rng rng(seed);
        for (float& v : out.x) v = static_cast<float>(v + m * rng.normal());
    } else if (shift.id == "dropout") {
        Rng rng(seed);
        for (float& v : out.x)
            if (rng.uniform() < m) v = 0.0f;
    } else if (shift.id == "scale") {
        for (float& v : out.x) v = static_cast<float>(v * (1.0 + m));
    } else {  // blur: blend with a random example of the same label
        Rng rng(seed);
        std::vector<std::vector<std::size_t>> by_label(d.classes);
        for (std::size_t i = 0; i < n; ++i) by_label[d.y[i]].push_back(i);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& bucket = by_label[d.y[i]];
            std::size_t j = bucket[rng.below(bucket.size())];
            const float* src = d.x.data() + i * dim;
            const float* mate = d.x.data() + j * dim;
            float* row = out.x.data() + i * dim;
            for (std::size_t k = 0; k < dim; ++k)
                row[k] = static_cast<float>((1.0 - m) * src[k] + m * mate[k]);
        }
    }
    return out;
}

TaskBundle make_task(const SyntheticTaskSpec& spec) {
    validate_spec(spec);
    TaskBundle bundle;
    bundle.spec = spec;
    if (spec.generator == "gaussian-blobs") {
        auto centers = blob_centers(spec);
        bundle.train = gen_blobs(spec, centers, derive_seed(spec.seed, "split:train"), spec.train_count);
        bundle.val = gen_blobs(spec, centers, derive_seed(spec.seed, "split:val"), spec.val_count);
        bundle.test = gen_blobs(spec, centers, derive_seed(spec.seed, "split:test"), spec.test_count);
    } else {
        bundle.train = gen_spirals(spec, derive_seed(spec.seed, "split:train"), spec.train_count);
        bundle.val = gen_spirals(spec, derive_seed(spec.seed, "split:val"), spec.val_count);
        bundle.test = gen_spirals(spec, derive_seed(spec.seed, "split:test"), spec.test_count);
    }
    for (std::size_t i = 0; i < spec.shifts.size(); ++i) {
        const ShiftSpec& s = spec.shifts[i];
        bundle.shifted.emplace_back(
            s.id, apply_shift(bundle.test, s, derive_seed(spec.seed, "shift:" + s.id, i)));
    }
    return bundle;
}

void save_task(const TaskBundle& bundle, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

    json desc;
    desc["format_version"] = 1;
    desc["spec"] = spec_to_json_obj(bundle.spec);
    desc["splits"] = {{"train", "train.bin"}, {"val", "val.bin"}, {"test", "test.bin"}};
    json shifted = json::array();
    for (std::size_t i = 0; i < bundle.shifted.size(); ++i) {
        std::string file = "shift-" + std::to_string(i) + "-" + bundle.shifted[i].first + ".bin";
        shifted.push_back({{"id", bundle.shifted[i].first}, {"file", file}});
        save_split(bundle.shifted[i].second, dir / file, "shift:" + bundle.shifted[i].first);
    }
    desc["shifted"] = shifted;

    save_split(bundle.train, dir / "train.bin", "train");
    save_split(bundle.val, dir / "val.bin", "val");
    save_split(bundle.test, dir / "test.bin", "test");

    std::ofstream out(dir / "descriptor.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "descriptor.json").string());
    out << desc.dump(2) << "\n";
    if (!out.flush()) throw IoError("write failed for " + (dir / "descriptor.json").string());
}

TaskBundle load_task(const std::filesystem::path& dir) {
    std::ifstream in(dir / "descriptor.json", std::ios::binary);
    if (!in) throw IoError("cannot open " + (dir / "descriptor.json").string());
    std::stringstream buf;
    buf << in.rdbuf();
    json desc = json::parse(buf.str(), nullptr, false);
    if (desc.is_discarded())
        throw CorruptHeaderError("task descriptor " + dir.string() + ": not valid JSON");

    TaskBundle bundle;
    try {
        int version = desc.at("format_version").get<int>();
        if (version != 1)
            throw UnsupportedVersionError("task descriptor format_version " +
                                          std::to_string(version) + " not supported");
        bundle.spec = spec_from_json_obj(desc.at("spec"));
        const json& splits = desc.at("splits");
        int classes = bundle.spec.classes;
        bundle.train = load_split(dir / splits.at("train").get<std::string>(), classes);
        bundle.val = load_split(dir / splits.at("val").get<std::string>(), classes);
        bundle.test = load_split(dir / splits.at("test").get<std::string>(), classes);
        for (const auto& entry : desc.at("shifted"))
            bundle.shifted.emplace_back(
                entry.at("id").get<std::string>(),
                load_split(dir / entry.at("file").get<std::string>(), classes));
    } catch (const json::exception& e) {
        throw CorruptHeaderError("task descriptor " + dir.string() + ": " + e.what());
    }
    return bundle;
}

MlpShape reference_shape(int input_dim, int classes) {
    return MlpShape{input_dim, {32, 16, 8}, classes};
}

ParameterSet init_mlp(const MlpShape& shape, std::uint64_t seed) {
    if (shape.input_dim < 1 || shape.classes < 2)
        throw InvalidArgumentError("init_mlp: need input_dim >= 1 and classes >= 2");
    for (int h : shape.hidden)
        if (h < 1) throw InvalidArgumentError("init_mlp: hidden sizes must be positive");

    Rng rng(seed);
    std::vector<TensorEntry> entries;
    int prev = shape.input_dim;
    auto add_layer = [&](const std::string& base, int out_dim, int in_dim) {
        TensorEntry w;
        w.name = base + ".weight";
        w.shape = {out_dim, in_dim};
        w.data.resize(static_cast<std::size_t>(out_dim) * in_dim);
        double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (float& v : w.data) v = static_cast<float>(scale * rng.normal());
        TensorEntry b;
        b.name = base + ".bias";
        b.shape = {out_dim};
        b.data.assign(out_dim, 0.0f);
        entries.push_back(std::move(w));
        entries.push_back(std::move(b));
    };
    for (std::size_t l = 0; l < shape.hidden.size(); ++l) {
        add_layer("fc" + std::to_string(l + 1), shape.hidden[l], prev);
        prev = shape.hidden[l];
    }
    add_layer("head", shape.classes, prev);
    return ParameterSet::from_entries(std::move(entries));
}

MlpShape shape_of(const ParameterSet& params) {
    const auto& entries = params.entries();
    auto fail = [](const std::string& why) -> MlpShape {
        throw SchemaMismatchError("parameter schema is not an MLP: " + why);
    };
    if (entries.size() < 2 || entries.size() % 2 != 0)
        return fail("expected weight/bias pairs plus a head");

    MlpShape shape;
    std::size_t idx = 0;
    int prev = -1;
    int layer = 1;
    while (idx + 2 < entries.size()) {
        std::string base = "fc" + std::to_string(layer);
        const TensorEntry& w = entries[idx];
        const TensorEntry& b = entries[idx + 1];
        if (w.name != base + ".weight") return fail("expected tensor " + base + ".weight");
        if (w.shape.size() != 2) return fail(w.name + " must be 2-d");
        if (b.name != base + ".bias" || b.shape.size() != 1 || b.shape[0] != w.shape[0])
            return fail("bias of " + base + " must be 1-d matching its weight rows");
        if (prev >= 0 && w.shape[1] != prev) return fail(w.name + " input width mismatch");
        if (prev < 0) shape.input_dim = static_cast<int>(w.shape[1]);
        shape.hidden.push_back(static_cast<int>(w.shape[0]));
        prev = static_cast<int>(w.shape[0]);
        idx += 2;
        ++layer;
    }
    const TensorEntry& hw = entries[idx];
    const TensorEntry& hb = entries[idx + 1];
    if (hw.name != "head.weight" || hw.shape.size() != 2) return fail("expected 2-d head.weight");
    if (hb.name != "head.bias" || hb.shape.size() != 1 || hb.shape[0] != hw.shape[0])
        return fail("head.bias must be 1-d matching head.weight rows");
    if (prev >= 0 && hw.shape[1] != prev) return fail("head.weight input width mismatch");
    if (prev < 0) shape.input_dim = static_cast<int>(hw.shape[1]);
    shape.classes = static_cast<int>(hw.shape[0]);
    return shape;
}

std::vector<float> mlp_forward(const ParameterSet& params, const std::vector<float>& x, int rows) {
    MlpShape shape = shape_of(params);
    if (rows < 1 || x.size() != static_cast<std::size_t>(rows) * shape.input_dim)
        throw InvalidArgumentError("mlp_forward: input size does not match rows * input_dim");

    std::vector<float> cur = x;
    std::vector<float> next;
    std::size_t n_layers = shape.hidden.size();
    for (std::size_t l = 0; l <= n_layers; ++l) {
        bool head = l == n_layers;
        const TensorEntry& w =
            params.at(head ? "head.weight" : "fc" + std::to_string(l + 1) + ".weight");
        const TensorEntry& b =
            params.at(head ? "head.bias" : "fc" + std::to_string(l + 1) + ".bias");
        auto out_dim = static_cast<std::size_t>(w.shape[0]);
        auto in_dim = static_cast<std::size_t>(w.shape[1]);
        next.resize(static_cast<std::size_t>(rows) * out_dim);
        kernels::dense_forward(cur.data(), rows, in_dim, w.data.data(), b.data.data(), out_dim,
                               next.data(),
                               head ? kernels::Activation::Identity : kernels::Activation::Tanh);
        cur.swap(next);
    }
    return cur;
}

double evaluate(const ParameterSet& params, const Dataset& dataset) {
    require_dataset(dataset, "evaluate");
    MlpShape shape = shape_of(params);
    if (shape.input_dim != dataset.dim)
        throw SchemaMismatchError("model expects input_dim " + std::to_string(shape.input_dim) +
                                  ", dataset has " + std::to_string(dataset.dim));
    if (shape.classes != dataset.classes)
        throw SchemaMismatchError("model has " + std::to_string(shape.classes) +
                                  " classes, dataset has " + std::to_string(dataset.classes));
    int rows = dataset.count();
    std::vector<float> logits = mlp_forward(params, dataset.x, rows);
    std::size_t correct =
        kernels::count_correct(logits.data(), rows, shape.classes, dataset.y.data());
    return static_cast<double>(correct) / rows;
}

std::string EvalResult::to_json() const {
    json shifts = json::array();
    for (const auto& [id, acc] : per_shift) shifts.push_back({{"id", id}, {"acc", acc}});
    json j{{"label", label}, {"clean", clean}, {"per_shift", shifts}, {"avg_ood", avg_ood}};
    return j.dump(2) + "\n";
}

EvalResult EvalResult::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw SchemaMismatchError("eval result JSON: parse error");
    EvalResult r;
    try {
        r.label = j.at("label").get<std::string>();
        r.clean = j.at("clean").get<double>();
        for (const auto& s : j.at("per_shift"))
            r.per_shift.emplace_back(s.at("id").get<std::string>(), s.at("acc").get<double>());
        r.avg_ood = j.at("avg_ood").get<double>();
    } catch (const json::exception& e) {
        throw SchemaMismatchError(std::string("eval result JSON: ") + e.what());
    }
    return r;
}

EvalResult evaluate_ood(const ParameterSet& params, const TaskBundle& task,
                        const std::string& label) {
    EvalResult r;
    r.label = label;
    r.clean = evaluate(params, task.test);
    double sum = 0.0;
    for (const auto& [id, dataset] : task.shifted) {
        double acc = evaluate(params, dataset);
        r.per_shift.emplace_back(id, acc);
        sum += acc;
    }
    r.avg_ood = task.shifted.empty() ? 0.0 : sum / static_cast<double>(task.shifted.size());
    return r;
}

namespace {

// Mutable copy of an MLP surfaced as flat layer arrays for SGD.
struct Net {
    MlpShape shape;
    std::vector<std::vector<float>> w;  // per layer, out*in row-major
    std::vector<std::vector<float>> b;

    static Net from_params(const ParameterSet& ps) {
        Net net;
        net.shape = shape_of(ps);
        std::size_t layers = net.shape.hidden.size() + 1;
        for (std::size_t l = 0; l < layers; ++l) {
            std::string base =
                l == net.shape.hidden.size() ? "head" : "fc" + std::to_string(l + 1);
            net.w.push_back(ps.at(base + ".weight").data);
            net.b.push_back(ps.at(base + ".bias").data);
        }
        return net;
    }

    int layer_out(std::size_t l) const {
        return l == shape.hidden.size() ? shape.classes : shape.hidden[l];
    }
    int layer_in(std::size_t l) const { return l == 0 ? shape.input_dim : shape.hidden[l - 1]; }

    bool finite() const {
        for (const auto& v : w)
            for (float f : v)
                if (!std::isfinite(f)) return false;
        for (const auto& v : b)
            for (float f : v)
                if (!std::isfinite(f)) return false;
        return true;
    }

    ParameterSet to_params() const {
        std::vector<TensorEntry> entries;
        for (std::size_t l = 0; l < w.size(); ++l) {
            std::string base = l == shape.hidden.size() ? "head" : "fc" + std::to_string(l + 1);
            TensorEntry we{base + ".weight", {layer_out(l), layer_in(l)}, w[l]};
            TensorEntry be{base + ".bias", {layer_out(l)}, b[l]};
            entries.push_back(std::move(we));
            entries.push_back(std::move(be));
        }
        return ParameterSet::from_entries(std::move(entries));
    }
};

struct SgdOpts {
    double lr = 0.05;
    double weight_decay = 0.0;
    int epochs = 40;
    int batch = 64;
    double aug_noise = 0.0;
    std::uint64_t seed = 0;
    bool head_only = false;
};

// Minibatch SGD on softmax cross-entropy. Serial inner loops keep the update
// order fixed; forward passes go through the shared kernels. Returns false as
// soon as the loss or any weight stops being finite.
bool sgd_train(Net& net, const Dataset& data, const SgdOpts& opts) {
    std::size_t layers = net.w.size();
    std::size_t first_trained = opts.head_only ? layers - 1 : 0;
    auto dim = static_cast<std::size_t>(data.dim);
    int n = data.count();
    Rng rng(opts.seed);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);

    std::vector<std::vector<float>> acts(layers + 1);  // acts[0] = inputs
    std::vector<std::vector<double>> delta(layers);
    std::vector<float> xb;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(perm.begin(), perm.end());
        for (int start = 0; start < n; start += opts.batch) {
            int bs = std::min(opts.batch, n - start);
            xb.resize(static_cast<std::size_t>(bs) * dim);
            for (int r = 0; r < bs; ++r) {
                const float* src = data.x.data() + static_cast<std::size_t>(perm[start + r]) * dim;
                float* dst = xb.data() + static_cast<std::size_t>(r) * dim;
                if (opts.aug_noise > 0.0) {
                    for (std::size_t k = 0; k < dim; ++k)
                        dst[k] = static_cast<float>(src[k] + opts.aug_noise * rng.normal());
                } else {
                    std::memcpy(dst, src, dim * sizeof(float));
                }
            }

            acts[0] = xb;
            for (std::size_t l = 0; l < layers; ++l) {
                auto out_dim = static_cast<std::size_t>(net.layer_out(l));
                acts[l + 1].resize(static_cast<std::size_t>(bs) * out_dim);
                kernels::dense_forward(acts[l].data(), bs, net.layer_in(l), net.w[l].data(),
                                       net.b[l].data(), out_dim, acts[l + 1].data(),
                                       l + 1 == layers ? kernels::Activation::Identity
                                                       : kernels::Activation::Tanh);
            }

            // softmax + cross-entropy; delta[last] = (p - onehot) / batch
            auto classes = static_cast<std::size_t>(net.shape.classes);
            delta[layers - 1].assign(static_cast<std::size_t>(bs) * classes, 0.0);
            double loss = 0.0;
            const std::vector<float>& logits = acts[layers];
            for (int r = 0; r < bs; ++r) {
                const float* z = logits.data() + static_cast<std::size_t>(r) * classes;
                double zmax = z[0];
                for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, (double)z[c]);
                double denom = 0.0;
                for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] - zmax);
                int label = data.y[perm[start + r]];
                loss -= (z[label] - zmax) - std::log(denom);
                double* dr = delta[layers - 1].data() + static_cast<std::size_t>(r) * classes;
                for (std::size_t c = 0; c < classes; ++c)
                    dr[c] = (std::exp(z[c] - zmax) / denom - (c == (std::size_t)label ? 1.0 : 0.0)) / bs;
            }
            if (!std::isfinite(loss)) return false;

            for (std::size_t l = layers; l-- > first_trained;) {
                auto out_dim = static_cast<std::size_t>(net.layer_out(l));
                auto in_dim = static_cast<std::size_t>(net.layer_in(l));
                const std::vector<float>& a_prev = acts[l];
                const std::vector<double>& d_cur = delta[l];

                if (l > first_trained) {
                    delta[l - 1].assign(static_cast<std::size_t>(bs) * in_dim, 0.0);
                    for (int r = 0; r < bs; ++r) {
                        const double* dr = d_cur.data() + static_cast<std::size_t>(r) * out_dim;
                        double* dp = delta[l - 1].data() + static_cast<std::size_t>(r) * in_dim;
                        for (std::size_t o = 0; o < out_dim; ++o) {
                            const float* wo = net.w[l].data() + o * in_dim;
                            for (std::size_t i = 0; i < in_dim; ++i) dp[i] += wo[i] * dr[o];
                        }
                        const float* ap = a_prev.data() + static_cast<std::size_t>(r) * in_dim;
                        for (std::size_t i = 0; i < in_dim; ++i)
                            dp[i] *= 1.0 - static_cast<double>(ap[i]) * ap[i];
                    }
                }

                for (std::size_t o = 0; o < out_dim; ++o) {
                    float* wo = net.w[l].data() + o * in_dim;
                    double gb = 0.0;
                    for (int r = 0; r < bs; ++r)
                        gb += d_cur[static_cast<std::size_t>(r) * out_dim + o];
                    for (std::size_t i = 0; i < in_dim; ++i) {
                        double g = 0.0;
                        for (int r = 0; r < bs; ++r)
                            g += d_cur[static_cast<std::size_t>(r) * out_dim + o] *
                                 a_prev[static_cast<std::size_t>(r) * in_dim + i];
                        g += opts.weight_decay * wo[i];
                        wo[i] = static_cast<float>(wo[i] - opts.lr * g);
                    }
                    net.b[l][o] = static_cast<float>(net.b[l][o] - opts.lr * gb);
                }
            }
        }
        if (!net.finite()) return false;
    }
    return true;
}

void validate_train_config(const TrainConfig& c) {
    if (!(c.lr > 0.0) || !std::isfinite(c.lr))
        throw InvalidArgumentError("config '" + c.id + "': learning rate must be positive");
    if (c.weight_decay < 0.0 || !std::isfinite(c.weight_decay))
        throw InvalidArgumentError("config '" + c.id + "': weight decay must be >= 0");
    if (c.epochs < 1) throw InvalidArgumentError("config '" + c.id + "': epochs must be >= 1");
    if (c.batch < 1) throw InvalidArgumentError("config '" + c.id + "': batch must be >= 1");
    if (c.aug_noise < 0.0 || !std::isfinite(c.aug_noise))
        throw InvalidArgumentError("config '" + c.id + "': augmentation noise must be >= 0");
    for (int h : c.hidden)
        if (h < 1) throw InvalidArgumentError("config '" + c.id + "': hidden sizes must be positive");
}

std::string fmt_double(double v) { return json(v).dump(); }

}  // namespace

TrainOutcome train_one(const TaskBundle& task, const TrainConfig& config,
                       const ParameterSet& init) {
    validate_train_config(config);
    require_dataset(task.train, "train_one");
    MlpShape shape = shape_of(init);
    if (shape.input_dim != task.train.dim || shape.classes != task.train.classes)
        throw SchemaMismatchError("shared init does not match the task's dimensions");
    if (!config.hidden.empty() && config.hidden != shape.hidden)
        throw SchemaMismatchError("config '" + config.id + "' hidden sizes do not match the init");

    TrainOutcome outcome;
    outcome.config = config;

    Net net = Net::from_params(init);
    SgdOpts opts;
    opts.lr = config.lr;
    opts.weight_decay = config.weight_decay;
    opts.epochs = config.epochs;
    opts.batch = config.batch;
    opts.aug_noise = config.aug_noise;
    opts.seed = derive_seed(config.seed, "sgd");
    if (!sgd_train(net, task.train, opts)) {
        outcome.failed = true;
        outcome.params = init;
        return outcome;
    }
    outcome.params = net.to_params();
    outcome.val_acc = evaluate(outcome.params, task.val);
    return outcome;
}

std::vector<TrainConfig> reference_grid() {
    std::vector<TrainConfig> grid;
    const double lrs[] = {0.15, 0.015};
    const double wds[] = {0.0, 5e-4};
    const double augs[] = {0.0, 0.5};
    int i = 0;
    for (double lr : lrs)
        for (double wd : wds)
            for (double aug : augs) {
                TrainConfig c;
                c.hidden = {32, 16, 8};
                c.lr = lr;
                c.weight_decay = wd;
                c.aug_noise = aug;
                c.epochs = 30;
                c.batch = 64;
                c.seed = static_cast<std::uint64_t>(i + 1);
                char buf[64];
                std::snprintf(buf, sizeof buf, "lr%.3f-wd%.4f-aug%.2f-s%d", lr, wd, aug, i + 1);
                c.id = buf;
                ++i;
                grid.push_back(std::move(c));
            }
    return grid;
}

std::string grid_to_json(const std::vector<TrainConfig>& grid) {
    json configs = json::array();
    for (const auto& c : grid)
        configs.push_back({{"id", c.id},
                           {"hidden", c.hidden},
                           {"lr", c.lr},
                           {"weight_decay", c.weight_decay},
                           {"epochs", c.epochs},
                           {"batch", c.batch},
                           {"aug_noise", c.aug_noise},
                           {"seed", c.seed},
                           {"init_id", c.init_id},
                           {"linear_probe", c.linear_probe}});
    json j{{"format_version", 1}, {"configs", configs}};
    return j.dump(2) + "\n";
}

std::vector<TrainConfig> grid_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw SchemaMismatchError("train grid JSON: parse error");
    std::vector<TrainConfig> grid;
    try {
        int version = j.at("format_version").get<int>();
        if (version != 1)
            throw UnsupportedVersionError("train grid format_version " + std::to_string(version) +
                                          " not supported");
        for (const auto& e : j.at("configs")) {
            TrainConfig c;
            c.id = e.at("id").get<std::string>();
            c.hidden = e.at("hidden").get<std::vector<int>>();
            c.lr = e.at("lr").get<double>();
            c.weight_decay = e.at("weight_decay").get<double>();
            c.epochs = e.at("epochs").get<int>();
            c.batch = e.at("batch").get<int>();
            c.aug_noise = e.at("aug_noise").get<double>();
            c.seed = e.at("seed").get<std::uint64_t>();
            c.init_id = e.at("init_id").get<std::string>();
            c.linear_probe = e.at("linear_probe").get<bool>();
            grid.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw SchemaMismatchError(std::string("train grid JSON: ") + e.what());
    }
    return grid;
}

TrainPoolResult train_pool(const TaskBundle& task, const std::vector<TrainConfig>& grid) {
    if (grid.empty()) throw InvalidArgumentError("train_pool: empty config grid");
    require_dataset(task.train, "train_pool");
    require_dataset(task.val, "train_pool");

    std::vector<TrainConfig> configs = grid;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        if (configs[i].id.empty()) configs[i].id = "cfg" + std::to_string(i);
        if (configs[i].hidden.empty()) configs[i].hidden = reference_shape(1, 2).hidden;
        validate_train_config(configs[i]);
    }
    for (std::size_t i = 0; i < configs.size(); ++i)
        for (std::size_t j = i + 1; j < configs.size(); ++j)
            if (configs[i].id == configs[j].id)
                throw InvalidArgumentError("duplicate config id '" + configs[i].id + "'");
    for (const auto& c : configs) {
        if (c.hidden != configs[0].hidden)
            throw InvalidArgumentError("all configs must share the architecture");
        if (c.init_id != configs[0].init_id || c.linear_probe != configs[0].linear_probe)
            throw InvalidArgumentError("all configs must share the initialization");
    }

    MlpShape shape{task.train.dim, configs[0].hidden, task.train.classes};
    ParameterSet init =
        init_mlp(shape, derive_seed(task.spec.seed, "init:" + configs[0].init_id));
    if (configs[0].linear_probe) {
        Net net = Net::from_params(init);
        SgdOpts probe;
        probe.lr = 0.1;
        probe.epochs = 15;
        probe.batch = 128;
        probe.seed = derive_seed(task.spec.seed, "probe:" + configs[0].init_id);
        probe.head_only = true;
        if (!sgd_train(net, task.train, probe))
            throw NonFiniteError("linear probe diverged on this task");
        init = net.to_params();
    }

    std::vector<TrainOutcome> outcomes(configs.size());
    std::exception_ptr first_error = nullptr;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t i = 0; i < configs.size(); ++i) {
        try {
            outcomes[i] = train_one(task, configs[i], init);
        } catch (...) {
#pragma omp critical
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    TrainPoolResult result;
    result.shared_init = init;
    for (auto& out : outcomes) {
        if (out.failed) {
            result.failed_ids.push_back(out.config.id);
        } else {
            result.pool.models.push_back(
                {out.config.id, std::move(out.params), out.val_acc});
        }
    }
    return result;
}

std::map<std::string, std::string> config_metadata(const TrainConfig& c, double val_acc) {
    std::map<std::string, std::string> meta;
    meta["config.id"] = c.id;
    std::string hidden;
    for (std::size_t i = 0; i < c.hidden.size(); ++i)
        hidden += (i ? "," : "") + std::to_string(c.hidden[i]);
    meta["config.hidden"] = hidden;
    meta["config.lr"] = fmt_double(c.lr);
    meta["config.weight_decay"] = fmt_double(c.weight_decay);
    meta["config.epochs"] = std::to_string(c.epochs);
    meta["config.batch"] = std::to_string(c.batch);
    meta["config.aug_noise"] = fmt_double(c.aug_noise);
    meta["config.seed"] = std::to_string(c.seed);
    meta["config.init_id"] = c.init_id;
    meta["config.linear_probe"] = c.linear_probe ? "true" : "false";
    meta["val_acc"] = fmt_double(val_acc);
    return meta;
}

}  // namespace soupkit::bench
