#pragma once

#include "bsdekit/analysis.hpp"
#include "bsdekit/pde_suite.hpp"
#include "bsdekit/report.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace bsde::cli {

/// Writes `content` to a sibling temp file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Current UTC time as an ISO-8601 string.
std::string utc_timestamp();

/// Library version baked in at build time.
std::string version_string();

/// Persistent Monte-Carlo reference values keyed by (problem parameters,
/// x, t, n_mc, seed). Thread-safe; cached values are exactly what a fresh
/// evaluation would return.
class ReferenceCache {
public:
    explicit ReferenceCache(std::filesystem::path file);

    /// Reference function for `problem` that consults and fills the cache.
    ReferenceFn hjb(std::shared_ptr<const HjbProblem> problem, std::int64_t n_mc, std::uint64_t seed);

    /// Rewrites the cache file when new entries were added.
    void save();

    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }
    const std::filesystem::path& file() const { return file_; }

private:
    std::filesystem::path file_;
    std::mutex mutex_;
    std::map<std::string, HjbReference> entries_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
    bool dirty_ = false;
};

/// 64-bit FNV-1a over a byte range, rendered as 16 hex digits.
std::string fnv1a_hex(const void* data, std::size_t size);

}  // namespace bsde::cli
