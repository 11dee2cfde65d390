#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "soupkit/tensor_store.hpp"

namespace soupkit {

// Per-component convex-combination coefficients, one per component, each in [0,1].
using MixingVector = std::vector<double>;

// Grouping of a model's tensors into m components. Component indices are
// 1-based. `labels`, when non-empty, carries one name per component.
struct PartitionSpec {
    int m = 0;
    std::map<std::string, int> assignment;  // tensor name -> component in 1..m
    std::vector<std::string> labels;
};

enum class PartitionStrategy { ContiguousBlocks, ByNamePrefix };

PartitionStrategy parse_strategy(const std::string& s);
std::string strategy_name(PartitionStrategy s);

// Checks the spec against a model schema: every schema tensor assigned,
// no unknown tensors, indices in range, every component non-empty.
// Throws PartitionError naming the offender.
void validate(const PartitionSpec& spec, const std::vector<std::string>& schema);

// Deterministic partition of an ordered schema into m components.
//   contiguous-blocks: m nearly equal runs of the tensor list; earlier blocks
//                      take the extra tensor when m does not divide the count.
//   by-name-prefix:    group by the dotted-name prefix (text before the first
//                      '.'), keep first-appearance order, then split the group
//                      sequence into m nearly equal runs.
PartitionSpec auto_partition(const std::vector<std::string>& schema, int m,
                             PartitionStrategy strategy);

// Throws BoundsError unless lambda has length m with every entry in [0,1].
void validate_mixing_vector(const MixingVector& lambda, int m);

// Eq-style per-component interpolation:
//   result[t] = lambda[j]*psi[t] + (1-lambda[j])*theta[t]  where j = assignment(t).
// lambda[j] == 1 returns psi's tensors bit-exactly, 0 returns theta's.
ParameterSet mix_components(const ParameterSet& psi, const ParameterSet& theta,
                            const PartitionSpec& spec, const MixingVector& lambda);

// JSON file format: {"m": int, "label": [..]?, "assignment": {name: index}}
PartitionSpec load_partition(const std::filesystem::path& path);
void save_partition(const PartitionSpec& spec, const std::filesystem::path& path);

}  // namespace soupkit
