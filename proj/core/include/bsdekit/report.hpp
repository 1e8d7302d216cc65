#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace bsde {

/// One table cell. Doubles are written with the shortest representation
/// that round-trips; NaN is written as an empty field.
using Cell = std::variant<double, std::int64_t, std::string>;

/// Tabular sweep result with string metadata.
class SweepReport {
public:
    SweepReport() = default;
    SweepReport(std::string variable, std::vector<std::string> columns);

    const std::string& variable() const { return variable_; }
    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<Cell>>& rows() const { return rows_; }
    std::size_t row_count() const { return rows_.size(); }

    /// Throws PreconditionError when the row width differs from the header.
    void add_row(std::vector<Cell> row);

    /// Inserts or replaces a metadata entry; insertion order is kept.
    void set_meta(const std::string& key, std::string value);
    const std::vector<std::pair<std::string, std::string>>& metadata() const { return meta_; }
    /// Empty string when absent.
    std::string meta(const std::string& key) const;

    /// Index of a column; throws PreconditionError when missing.
    std::size_t column_index(const std::string& name) const;
    /// Numeric view of a column (int64 cells are widened, strings rejected).
    std::vector<double> column_values(const std::string& name) const;

    /// Header row plus one line per row, '\n' terminated.
    std::string to_csv() const;

private:
    std::string variable_;
    std::vector<std::string> columns_;
    std::vector<std::vector<Cell>> rows_;
    std::vector<std::pair<std::string, std::string>> meta_;
};

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

/// Quotes a CSV field when it contains a separator, quote or newline.
std::string csv_escape(const std::string& field);

}  // namespace bsde
