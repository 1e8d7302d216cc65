#include "bsdekit/report.hpp"

#include "bsdekit/errors.hpp"

#include <charconv>
#include <cmath>

namespace bsde {

SweepReport::SweepReport(std::string variable, std::vector<std::string> columns)
    : variable_(std::move(variable)), columns_(std::move(columns)) {}

void SweepReport::add_row(std::vector<Cell> row) {
    if (row.size() != columns_.size()) {
        throw PreconditionError("report: row has " + std::to_string(row.size()) + " cells, header has " +
                                std::to_string(columns_.size()));
    }
    rows_.push_back(std::move(row));
}

void SweepReport::set_meta(const std::string& key, std::string value) {
    for (auto& kv : meta_) {
        if (kv.first == key) {
            kv.second = std::move(value);
            return;
        }
    }
    meta_.emplace_back(key, std::move(value));
}

std::string SweepReport::meta(const std::string& key) const {
    for (const auto& kv : meta_) {
        if (kv.first == key) return kv.second;
    }
    return {};
}

std::size_t SweepReport::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i] == name) return i;
    }
    throw PreconditionError("report: no column '" + name + "'");
}

std::vector<double> SweepReport::column_values(const std::string& name) const {
    const std::size_t c = column_index(name);
    std::vector<double> out;
    out.reserve(rows_.size());
    for (const auto& row : rows_) {
        if (const auto* d = std::get_if<double>(&row[c])) {
            out.push_back(*d);
        } else if (const auto* i = std::get_if<std::int64_t>(&row[c])) {
            out.push_back(static_cast<double>(*i));
        } else {
            throw PreconditionError("report: column '" + name + "' is not numeric");
        }
    }
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) return {};
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string SweepReport::to_csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(columns_[i]);
    }
    out += '\n';
    for (const auto& row : rows_) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            std::visit(
                [&](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, double>) {
                        out += format_double(v);
                    } else if constexpr (std::is_same_v<T, std::int64_t>) {
                        out += std::to_string(v);
                    } else {
                        out += csv_escape(v);
                    }
                },
                row[i]);
        }
        out += '\n';
    }
    return out;
}

}  // namespace bsde
