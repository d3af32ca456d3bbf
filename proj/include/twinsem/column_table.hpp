#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace twinsem {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline constexpr int kMissingCode = -1;

inline bool is_missing(double value) { return std::isnan(value); }

struct ContinuousColumn {
    std::vector<double> values;
};

/// Ordered categories; codes index into `levels`, kMissingCode when absent.
struct OrdinalColumn {
    std::vector<std::string> levels;
    std::vector<int> codes;
};

/// Free text (e.g. zygosity labels). Not usable as a model variable.
struct TextColumn {
    std::vector<std::optional<std::string>> values;
};

struct Column {
    std::string name;
    std::variant<ContinuousColumn, OrdinalColumn, TextColumn> data;

    bool is_continuous() const { return std::holds_alternative<ContinuousColumn>(data); }
    bool is_ordinal() const { return std::holds_alternative<OrdinalColumn>(data); }
    bool is_text() const { return std::holds_alternative<TextColumn>(data); }
    bool missing(std::size_t row) const;
};

/// Rectangular, row-aligned dataset.
class ColumnTable {
public:
    ColumnTable() = default;

    std::size_t nrows() const { return nrows_; }
    std::size_t ncols() const { return columns_.size(); }
    const std::vector<Column>& columns() const { return columns_; }

    bool has(std::string_view name) const { return find(name) != nullptr; }
    const Column* find(std::string_view name) const;
    const Column& column(std::string_view name) const;

    /// Appends a column, or replaces an existing column of the same name in place.
    void put(Column column);
    void put_continuous(std::string name, std::vector<double> values);
    void put_ordinal(std::string name, std::vector<std::string> levels, std::vector<int> codes);
    void put_text(std::string name, std::vector<std::optional<std::string>> values);

    const std::vector<double>& continuous(std::string_view name) const;
    std::vector<double>& continuous(std::string_view name);
    const OrdinalColumn& ordinal(std::string_view name) const;
    const TextColumn& text(std::string_view name) const;

    /// New table holding only the listed rows, in the given order.
    ColumnTable take_rows(std::span<const std::size_t> rows) const;

    bool operator==(const ColumnTable& other) const;

private:
    Column* find_mut(std::string_view name);

    std::size_t nrows_ = 0;
    std::vector<Column> columns_;
};

/// Level order per ordinal column.
using OrdinalLevels = std::map<std::string, std::vector<std::string>, std::less<>>;

/// CSV with a header row. Empty fields and `NA` are missing. Columns named in
/// `ordinal` are matched against their level labels; other columns are numeric
/// when every present field parses as a number and text otherwise.
ColumnTable parse_csv(std::string_view text, const OrdinalLevels& ordinal = {});
ColumnTable read_csv(const std::filesystem::path& path, const OrdinalLevels& ordinal = {});
std::string format_csv(const ColumnTable& table);

/// Shortest round-trip decimal representation.
std::string format_number(double value);

}  // namespace twinsem
