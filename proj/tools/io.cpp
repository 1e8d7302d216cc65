#include "io.hpp"

#include "bsdekit/errors.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <vector>

#ifndef BSDEKIT_VERSION
#define BSDEKIT_VERSION "unknown"
#endif

namespace bsde::cli {

namespace fs = std::filesystem;

void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string version_string() { return BSDEKIT_VERSION; }

std::string fnv1a_hex(const void* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ReferenceCache::ReferenceCache(fs::path file) : file_(std::move(file)) {
    std::ifstream in(file_, std::ios::binary);
    if (!in) return;
    std::ostringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception&) {
        // A corrupt cache is rebuilt from scratch.
        return;
    }
    if (!j.is_object() || !j.contains("entries") || !j["entries"].is_object()) return;
    for (auto it = j["entries"].begin(); it != j["entries"].end(); ++it) {
        const auto& v = it.value();
        if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
            entries_[it.key()] = {v[0].get<double>(), v[1].get<double>()};
        }
    }
}

ReferenceFn ReferenceCache::hjb(std::shared_ptr<const HjbProblem> problem, std::int64_t n_mc,
                                std::uint64_t seed) {
    return [this, problem = std::move(problem), n_mc, seed](CVecRef x, double t) {
        std::vector<double> key;
        key.reserve(x.size() + 6);
        key.push_back(static_cast<double>(problem->dim()));
        key.push_back(problem->sigma());
        key.push_back(problem->horizon());
        key.push_back(t);
        key.push_back(static_cast<double>(n_mc));
        key.push_back(static_cast<double>(seed));
        for (Eigen::Index i = 0; i < x.size(); ++i) key.push_back(x[i]);
        std::string k = fnv1a_hex(key.data(), key.size() * sizeof(double));
        // seed may exceed 2^53; hash it separately so distinct seeds never alias
        k += fnv1a_hex(&seed, sizeof seed);
        {
            std::lock_guard lock(mutex_);
            if (auto it = entries_.find(k); it != entries_.end()) {
                ++hits_;
                return it->second.value;
            }
        }
        const HjbReference r = hjb_reference(*problem, x, t, n_mc, seed);
        std::lock_guard lock(mutex_);
        entries_[k] = r;
        ++misses_;
        dirty_ = true;
        return r.value;
    };
}

void ReferenceCache::save() {
    std::lock_guard lock(mutex_);
    if (!dirty_) return;
    nlohmann::ordered_json j;
    j["format"] = "hjb_reference_cache/1";
    nlohmann::ordered_json e = nlohmann::ordered_json::object();
    for (const auto& [k, v] : entries_) e[k] = {v.value, v.std_error};
    j["entries"] = std::move(e);
    write_atomic(file_, j.dump(1) + "\n");
    dirty_ = false;
}

}  // namespace bsde::cli
