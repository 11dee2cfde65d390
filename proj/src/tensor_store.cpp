#include "soupkit/tensor_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>
#include "soupkit/kernels.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are not supported");

namespace soupkit {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'O', 'U', 'P', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;
constexpr uint64_t kAlign = 8;

uint64_t align_up(uint64_t v) { return (v + kAlign - 1) & ~(kAlign - 1); }

bool all_finite(const std::vector<float>& v) {
    for (float x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace

ParameterSet ParameterSet::from_entries(std::vector<TensorEntry> entries) {
    ParameterSet ps;
    ps.index_.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const TensorEntry& e = entries[i];
        if (e.name.empty()) {
            throw InvalidArgumentError("tensor name at position " + std::to_string(i) + " is empty");
        }
        if (!ps.index_.emplace(e.name, i).second) {
            throw InvalidArgumentError("duplicate tensor name '" + e.name + "'");
        }
        int64_t n = 1;
        for (int64_t d : e.shape) {
            if (d <= 0) {
                throw ShapeMismatchError("tensor '" + e.name + "' has non-positive dimension " +
                                         std::to_string(d));
            }
            n *= d;
        }
        if (n != static_cast<int64_t>(e.data.size())) {
            throw ShapeMismatchError("tensor '" + e.name + "': product(shape)=" + std::to_string(n) +
                                     " but data has " + std::to_string(e.data.size()) + " elements");
        }
        if (!all_finite(e.data)) {
            throw NonFiniteError("tensor '" + e.name + "' contains NaN or Inf");
        }
    }
    ps.entries_ = std::move(entries);
    return ps;
}

const TensorEntry& ParameterSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw InvalidArgumentError("no tensor named '" + name + "'");
    }
    return entries_[it->second];
}

int64_t ParameterSet::numel() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.numel();
    return n;
}

std::vector<std::string> ParameterSet::tensor_names() const {
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const auto& e : entries_) names.push_back(e.name);
    return names;
}

bool ParameterSet::same_schema(const ParameterSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name) return false;
        if (entries_[i].shape != other.entries_[i].shape) return false;
    }
    return true;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
    if (!same_schema(other)) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i].data;
        const auto& b = other.entries_[i].data;
        if (a.size() != b.size()) return false;
        if (!a.empty() &&
            std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

void require_same_schema(const ParameterSet& a, const ParameterSet& b) {
    if (a.size() != b.size()) {
        throw SchemaMismatchError("tensor count differs: " + std::to_string(a.size()) + " vs " +
                                  std::to_string(b.size()));
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        const TensorEntry& ea = a.at(i);
        const TensorEntry& eb = b.at(i);
        if (ea.name != eb.name) {
            throw SchemaMismatchError("tensor " + std::to_string(i) + " name differs: '" + ea.name +
                                      "' vs '" + eb.name + "'");
        }
        if (ea.shape != eb.shape) {
            throw SchemaMismatchError("tensor '" + ea.name + "' shape differs");
        }
    }
}

ParameterSet lincomb(double a, const ParameterSet& x, double b, const ParameterSet& y) {
    require_same_schema(x, y);
    std::vector<TensorEntry> out;
    out.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const TensorEntry& ex = x.at(i);
        const TensorEntry& ey = y.at(i);
        TensorEntry e{ex.name, ex.shape, std::vector<float>(ex.data.size())};
        kernels::axpby(a, ex.data.data(), b, ey.data.data(), e.data.data(), e.data.size());
        out.push_back(std::move(e));
    }
    return ParameterSet::from_entries(std::move(out));
}

ParameterSet pool_mean(const std::vector<const ParameterSet*>& pool) {
    if (pool.empty()) {
        throw InvalidArgumentError("pool_mean: empty pool");
    }
    const ParameterSet& first = *pool[0];
    for (std::size_t i = 1; i < pool.size(); ++i) require_same_schema(first, *pool[i]);

    std::vector<TensorEntry> out;
    out.reserve(first.size());
    std::vector<const float*> ptrs(pool.size());
    for (std::size_t t = 0; t < first.size(); ++t) {
        const TensorEntry& e0 = first.at(t);
        for (std::size_t i = 0; i < pool.size(); ++i) ptrs[i] = pool[i]->at(t).data.data();
        TensorEntry e{e0.name, e0.shape, std::vector<float>(e0.data.size())};
        kernels::pool_mean(ptrs.data(), ptrs.size(), e.data.data(), e.data.size());
        out.push_back(std::move(e));
    }
    return ParameterSet::from_entries(std::move(out));
}

uint64_t fingerprint(const ParameterSet& ps) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& e : ps.entries()) {
        mix_bytes(e.name.data(), e.name.size());
        unsigned char sep = 0;
        mix_bytes(&sep, 1);
        uint64_t ndim = e.shape.size();
        mix_bytes(&ndim, sizeof(ndim));
        mix_bytes(e.shape.data(), e.shape.size() * sizeof(int64_t));
        mix_bytes(e.data.data(), e.data.size() * sizeof(float));
    }
    return h;
}

void save_checkpoint(const ParameterSet& ps, const std::map<std::string, std::string>& metadata,
                     const std::filesystem::path& path) {
    json records = json::array();
    uint64_t offset = 0;
    for (const auto& e : ps.entries()) {
        const uint64_t nbytes = static_cast<uint64_t>(e.numel()) * sizeof(float);
        records.push_back({{"name", e.name},
                           {"shape", e.shape},
                           {"dtype", "f32"},
                           {"offset", offset},
                           {"nbytes", nbytes}});
        offset = align_up(offset + nbytes);
    }
    json manifest = {{"format_version", kFormatVersion},
                     {"tensors", records},
                     {"metadata", metadata}};
    const std::string header = manifest.dump();
    if (header.size() > 0xffffffffULL) {
        throw IoError("manifest too large");
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(kMagic, sizeof(kMagic));
    const uint32_t hlen = static_cast<uint32_t>(header.size());
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    static constexpr char zeros[kAlign] = {};
    uint64_t written = 0;
    for (const auto& e : ps.entries()) {
        const uint64_t nbytes = static_cast<uint64_t>(e.numel()) * sizeof(float);
        out.write(reinterpret_cast<const char*>(e.data.data()), static_cast<std::streamsize>(nbytes));
        written += nbytes;
        const uint64_t pad = align_up(written) - written;
        if (&e != &ps.entries().back() && pad > 0) {
            out.write(zeros, static_cast<std::streamsize>(pad));
            written += pad;
        }
    }
    out.flush();
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read failed for '" + path.string() + "'");
    }

    if (bytes.size() < sizeof(kMagic) + sizeof(uint32_t)) {
        throw CorruptHeaderError("file too short for header");
    }
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw CorruptHeaderError("bad magic bytes");
    }
    uint32_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + sizeof(kMagic), sizeof(hlen));
    const uint64_t data_begin = sizeof(kMagic) + sizeof(uint32_t) + static_cast<uint64_t>(hlen);
    if (data_begin > bytes.size()) {
        throw CorruptHeaderError("declared header length exceeds file size");
    }

    json manifest;
    try {
        manifest = json::parse(bytes.begin() + sizeof(kMagic) + sizeof(uint32_t),
                               bytes.begin() + static_cast<std::ptrdiff_t>(data_begin));
    } catch (const json::exception& e) {
        throw CorruptHeaderError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("format_version") ||
        !manifest["format_version"].is_number_integer()) {
        throw CorruptHeaderError("manifest missing integer format_version");
    }
    const int version = manifest["format_version"].get<int>();
    if (version != kFormatVersion) {
        throw UnsupportedVersionError("unsupported format_version " + std::to_string(version));
    }
    if (!manifest.contains("tensors") || !manifest["tensors"].is_array()) {
        throw CorruptHeaderError("manifest missing tensors array");
    }

    const uint64_t data_len = bytes.size() - data_begin;
    const char* data = bytes.data() + data_begin;

    struct Record {
        std::string name;
        std::vector<int64_t> shape;
        uint64_t offset;
        uint64_t nbytes;
    };
    std::vector<Record> records;
    uint64_t prev_end = 0;
    for (const auto& t : manifest["tensors"]) {
        if (!t.is_object() || !t.contains("name") || !t["name"].is_string() ||
            !t.contains("shape") || !t["shape"].is_array() || !t.contains("dtype") ||
            !t.contains("offset") || !t.contains("nbytes")) {
            throw CorruptHeaderError("malformed tensor record");
        }
        Record r;
        r.name = t["name"].get<std::string>();
        if (r.name.empty()) {
            throw CorruptHeaderError("tensor record with empty name");
        }
        if (t["dtype"].get<std::string>() != "f32") {
            throw UnsupportedVersionError("dtype '" + t["dtype"].get<std::string>() +
                                          "' is not supported in format_version 1");
        }
        int64_t numel = 1;
        for (const auto& d : t["shape"]) {
            if (!d.is_number_integer()) throw CorruptHeaderError("non-integer shape dimension");
            const int64_t dim = d.get<int64_t>();
            if (dim <= 0) {
                throw ShapeMismatchError("tensor '" + r.name + "' has non-positive dimension " +
                                         std::to_string(dim));
            }
            r.shape.push_back(dim);
            numel *= dim;
        }
        r.offset = t["offset"].get<uint64_t>();
        r.nbytes = t["nbytes"].get<uint64_t>();
        if (r.nbytes != static_cast<uint64_t>(numel) * sizeof(float)) {
            throw ShapeMismatchError("tensor '" + r.name + "': declared nbytes " +
                                     std::to_string(r.nbytes) + " != product(shape)*4 = " +
                                     std::to_string(numel * sizeof(float)));
        }
        if (r.offset % kAlign != 0) {
            throw CorruptHeaderError("tensor '" + r.name + "' offset not 8-byte aligned");
        }
        if (r.offset < prev_end) {
            throw CorruptHeaderError("tensor '" + r.name + "' overlaps the previous record");
        }
        if (r.offset + r.nbytes > data_len) {
            throw CorruptHeaderError("tensor '" + r.name + "' extends past end of data section (truncated file?)");
        }
        prev_end = r.offset + r.nbytes;
        records.push_back(std::move(r));
    }
    if (data_len != prev_end) {
        throw CorruptHeaderError("data section is " + std::to_string(data_len) +
                                 " bytes but records account for " + std::to_string(prev_end));
    }

    std::vector<TensorEntry> entries;
    entries.reserve(records.size());
    for (auto& r : records) {
        TensorEntry e;
        e.name = std::move(r.name);
        e.shape = std::move(r.shape);
        e.data.resize(r.nbytes / sizeof(float));
        std::memcpy(e.data.data(), data + r.offset, r.nbytes);
        entries.push_back(std::move(e));
    }

    Checkpoint ck;
    try {
        ck.params = ParameterSet::from_entries(std::move(entries));
    } catch (const InvalidArgumentError& e) {
        // duplicate names in the manifest
        throw CorruptHeaderError(e.what());
    }

    if (manifest.contains("metadata")) {
        if (!manifest["metadata"].is_object()) {
            throw CorruptHeaderError("metadata is not an object");
        }
        for (const auto& [k, v] : manifest["metadata"].items()) {
            if (!v.is_string()) {
                throw CorruptHeaderError("metadata value for '" + k + "' is not a string");
            }
            ck.metadata[k] = v.get<std::string>();
        }
    }
    return ck;
}

}  // namespace soupkit
