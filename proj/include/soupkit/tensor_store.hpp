#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "soupkit/errors.hpp"

namespace soupkit {

// One named tensor: row-major f32 payload plus its shape.
struct TensorEntry {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<float> data;

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
};

// Ordered collection of named tensors; the weights of one model.
//
// Immutable after construction. Every constructor path validates the
// invariants (unique non-empty names, shape/length agreement, finite values),
// so holding a ParameterSet means holding a well-formed one. All arithmetic
// returns new sets; instances are safe to share read-only across threads.
class ParameterSet {
public:
    ParameterSet() = default;

    // Validates and takes ownership. Throws ShapeMismatchError,
    // NonFiniteError or InvalidArgumentError when an invariant fails.
    static ParameterSet from_entries(std::vector<TensorEntry> entries);

    const std::vector<TensorEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const TensorEntry& at(std::size_t i) const { return entries_.at(i); }
    const TensorEntry& at(const std::string& name) const;

    // Total scalar count across all tensors.
    int64_t numel() const;

    std::vector<std::string> tensor_names() const;

    // Same names, same shapes, same order.
    bool same_schema(const ParameterSet& other) const;

    bool operator==(const ParameterSet& other) const;

private:
    std::vector<TensorEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Throws SchemaMismatchError describing the first difference.
void require_same_schema(const ParameterSet& a, const ParameterSet& b);

// result[t] = a*x[t] + b*y[t] elementwise; accumulates in double, rounds once
// to f32. lincomb(1,x,0,y) returns x bit-exactly.
ParameterSet lincomb(double a, const ParameterSet& x, double b, const ParameterSet& y);

// Elementwise arithmetic mean over a non-empty pool with identical schemas.
ParameterSet pool_mean(const std::vector<const ParameterSet*>& pool);

// Order-sensitive FNV-1a over names, shapes and raw f32 payloads. Used as a
// cheap identity key for evaluator caches and determinism checks.
uint64_t fingerprint(const ParameterSet& ps);

struct Checkpoint {
    ParameterSet params;
    std::map<std::string, std::string> metadata;
};

// Single-file checkpoint, format version 1:
//   bytes 0-7   magic "SOUPCKPT"
//   bytes 8-11  u32 little-endian header length H
//   bytes 12..  UTF-8 JSON manifest {format_version, tensors:[...], metadata:{}}
//   rest        concatenated row-major little-endian f32 payloads; offsets are
//               relative to the data-section start and 8-byte aligned
//
// save_checkpoint writes deterministic bytes for identical input.
void save_checkpoint(const ParameterSet& ps, const std::map<std::string, std::string>& metadata,
                     const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

inline ParameterSet load_params(const std::filesystem::path& path) {
    return load_checkpoint(path).params;
}

}  // namespace soupkit
