#include "soupkit/partition.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>
#include "soupkit/kernels.hpp"

namespace soupkit {

using nlohmann::json;

PartitionStrategy parse_strategy(const std::string& s) {
    if (s == "contiguous-blocks") return PartitionStrategy::ContiguousBlocks;
    if (s == "by-name-prefix") return PartitionStrategy::ByNamePrefix;
    throw InvalidArgumentError("unknown partition strategy '" + s +
                               "' (expected contiguous-blocks or by-name-prefix)");
}

std::string strategy_name(PartitionStrategy s) {
    return s == PartitionStrategy::ContiguousBlocks ? "contiguous-blocks" : "by-name-prefix";
}

void validate(const PartitionSpec& spec, const std::vector<std::string>& schema) {
    if (spec.m < 1) {
        throw PartitionError(PartitionError::Kind::InvalidIndex, std::to_string(spec.m),
                             "component count m must be >= 1, got " + std::to_string(spec.m));
    }
    std::vector<int> tensors_per_component(static_cast<std::size_t>(spec.m), 0);
    for (const auto& [name, idx] : spec.assignment) {
        if (idx < 1 || idx > spec.m) {
            throw PartitionError(PartitionError::Kind::InvalidIndex, name,
                                 "tensor '" + name + "' assigned to component " +
                                     std::to_string(idx) + ", valid range is 1.." +
                                     std::to_string(spec.m));
        }
        tensors_per_component[static_cast<std::size_t>(idx - 1)]++;
    }
    for (const std::string& name : schema) {
        if (spec.assignment.find(name) == spec.assignment.end()) {
            throw PartitionError(PartitionError::Kind::UnassignedTensor, name,
                                 "unassigned tensor '" + name + "'");
        }
    }
    for (const auto& [name, idx] : spec.assignment) {
        if (std::find(schema.begin(), schema.end(), name) == schema.end()) {
            throw PartitionError(PartitionError::Kind::UnknownTensor, name,
                                 "assignment references unknown tensor '" + name + "'");
        }
    }
    for (int j = 1; j <= spec.m; ++j) {
        if (tensors_per_component[static_cast<std::size_t>(j - 1)] == 0) {
            throw PartitionError(PartitionError::Kind::EmptyComponent, std::to_string(j),
                                 "empty component " + std::to_string(j));
        }
    }
}

namespace {

std::string dotted_prefix(const std::string& name) {
    const auto pos = name.find('.');
    return pos == std::string::npos ? name : name.substr(0, pos);
}

// Split `count` items into `m` nearly equal runs; earlier runs get the extra.
// Returns the run length of each of the m runs.
std::vector<std::size_t> run_lengths(std::size_t count, int m) {
    const std::size_t base = count / static_cast<std::size_t>(m);
    const std::size_t extra = count % static_cast<std::size_t>(m);
    std::vector<std::size_t> lens(static_cast<std::size_t>(m), base);
    for (std::size_t i = 0; i < extra; ++i) lens[i]++;
    return lens;
}

}  // namespace

PartitionSpec auto_partition(const std::vector<std::string>& schema, int m,
                             PartitionStrategy strategy) {
    if (m < 1) {
        throw InvalidArgumentError("auto_partition: m must be >= 1");
    }
    PartitionSpec spec;
    spec.m = m;

    if (strategy == PartitionStrategy::ContiguousBlocks) {
        if (static_cast<std::size_t>(m) > schema.size()) {
            throw PartitionError(PartitionError::Kind::TooManyComponents, std::to_string(m),
                                 "m=" + std::to_string(m) + " exceeds tensor count " +
                                     std::to_string(schema.size()));
        }
        const auto lens = run_lengths(schema.size(), m);
        std::size_t pos = 0;
        for (int j = 1; j <= m; ++j) {
            for (std::size_t i = 0; i < lens[static_cast<std::size_t>(j - 1)]; ++i) {
                spec.assignment[schema[pos++]] = j;
            }
            spec.labels.push_back("block-" + std::to_string(j));
        }
        return spec;
    }

    // by-name-prefix: prefix groups in first-appearance order
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<std::string>> groups;
    for (const std::string& name : schema) {
        const std::string p = dotted_prefix(name);
        if (groups.find(p) == groups.end()) group_order.push_back(p);
        groups[p].push_back(name);
    }
    if (static_cast<std::size_t>(m) > group_order.size()) {
        throw PartitionError(PartitionError::Kind::TooManyComponents, std::to_string(m),
                             "m=" + std::to_string(m) + " exceeds distinct prefix count " +
                                 std::to_string(group_order.size()));
    }
    const auto lens = run_lengths(group_order.size(), m);
    std::size_t gpos = 0;
    for (int j = 1; j <= m; ++j) {
        std::string label;
        for (std::size_t i = 0; i < lens[static_cast<std::size_t>(j - 1)]; ++i) {
            const std::string& p = group_order[gpos++];
            for (const std::string& name : groups[p]) spec.assignment[name] = j;
            label += (label.empty() ? "" : "+") + p;
        }
        spec.labels.push_back(label);
    }
    return spec;
}

void validate_mixing_vector(const MixingVector& lambda, int m) {
    if (static_cast<int>(lambda.size()) != m) {
        throw BoundsError("mixing vector has length " + std::to_string(lambda.size()) +
                          ", expected m=" + std::to_string(m));
    }
    for (std::size_t j = 0; j < lambda.size(); ++j) {
        if (!(lambda[j] >= 0.0 && lambda[j] <= 1.0)) {
            throw BoundsError("lambda[" + std::to_string(j + 1) + "] = " +
                              std::to_string(lambda[j]) + " outside [0,1]");
        }
    }
}

ParameterSet mix_components(const ParameterSet& psi, const ParameterSet& theta,
                            const PartitionSpec& spec, const MixingVector& lambda) {
    require_same_schema(psi, theta);
    validate(spec, psi.tensor_names());
    validate_mixing_vector(lambda, spec.m);

    std::vector<TensorEntry> out;
    out.reserve(psi.size());
    for (std::size_t t = 0; t < psi.size(); ++t) {
        const TensorEntry& ep = psi.at(t);
        const TensorEntry& et = theta.at(t);
        const int j = spec.assignment.at(ep.name);
        const double lam = lambda[static_cast<std::size_t>(j - 1)];
        TensorEntry e{ep.name, ep.shape, std::vector<float>(ep.data.size())};
        kernels::axpby(lam, ep.data.data(), 1.0 - lam, et.data.data(), e.data.data(),
                       e.data.size());
        out.push_back(std::move(e));
    }
    return ParameterSet::from_entries(std::move(out));
}

PartitionSpec load_partition(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open partition file '" + path.string() + "'");
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidArgumentError("partition file '" + path.string() + "' is not valid JSON: " +
                                   e.what());
    }
    if (!j.is_object() || !j.contains("m") || !j["m"].is_number_integer() ||
        !j.contains("assignment") || !j["assignment"].is_object()) {
        throw InvalidArgumentError("partition file needs integer 'm' and object 'assignment'");
    }
    PartitionSpec spec;
    spec.m = j["m"].get<int>();
    for (const auto& [name, idx] : j["assignment"].items()) {
        if (!idx.is_number_integer()) {
            throw InvalidArgumentError("assignment for '" + name + "' is not an integer");
        }
        spec.assignment[name] = idx.get<int>();
    }
    if (j.contains("label")) {
        if (!j["label"].is_array()) {
            throw InvalidArgumentError("'label' must be an array of per-component strings");
        }
        for (const auto& l : j["label"]) spec.labels.push_back(l.get<std::string>());
    }
    return spec;
}

void save_partition(const PartitionSpec& spec, const std::filesystem::path& path) {
    json j = {{"m", spec.m}, {"assignment", spec.assignment}};
    if (!spec.labels.empty()) j["label"] = spec.labels;
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << j.dump(2) << "\n";
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

}  // namespace soupkit
