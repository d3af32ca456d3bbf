#include "twinsem/column_table.hpp"

#include "twinsem/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace twinsem {

bool Column::missing(std::size_t row) const {
    return std::visit(
        [row](const auto& col) -> bool {
            using T = std::decay_t<decltype(col)>;
            if constexpr (std::is_same_v<T, ContinuousColumn>) {
                return is_missing(col.values[row]);
            } else if constexpr (std::is_same_v<T, OrdinalColumn>) {
                return col.codes[row] == kMissingCode;
            } else {
                return !col.values[row].has_value();
            }
        },
        data);
}

namespace {

std::size_t column_length(const Column& column) {
    return std::visit(
        [](const auto& col) -> std::size_t {
            using T = std::decay_t<decltype(col)>;
            if constexpr (std::is_same_v<T, OrdinalColumn>) {
                return col.codes.size();
            } else {
                return col.values.size();
            }
        },
        column.data);
}

}  // namespace

const Column* ColumnTable::find(std::string_view name) const {
    for (const auto& c : columns_)
        if (c.name == name) return &c;
    return nullptr;
}

Column* ColumnTable::find_mut(std::string_view name) {
    for (auto& c : columns_)
        if (c.name == name) return &c;
    return nullptr;
}

const Column& ColumnTable::column(std::string_view name) const {
    const Column* c = find(name);
    if (!c) throw DataError("no column named '" + std::string(name) + "'");
    return *c;
}

void ColumnTable::put(Column column) {
    const std::size_t n = column_length(column);
    if (columns_.empty()) {
        nrows_ = n;
    } else if (n != nrows_ && !(columns_.size() == 1 && find(column.name))) {
        throw DataError("column '" + column.name + "' has " + std::to_string(n) + " rows, table has " +
                        std::to_string(nrows_));
    }
    if (const auto* ord = std::get_if<OrdinalColumn>(&column.data)) {
        const int nlev = static_cast<int>(ord->levels.size());
        for (int code : ord->codes)
            if (code != kMissingCode && (code < 0 || code >= nlev))
                throw DataError("ordinal code out of range in column '" + column.name + "'");
    }
    if (Column* existing = find_mut(column.name)) {
        *existing = std::move(column);
        nrows_ = n;
    } else {
        columns_.push_back(std::move(column));
    }
}

void ColumnTable::put_continuous(std::string name, std::vector<double> values) {
    put(Column{std::move(name), ContinuousColumn{std::move(values)}});
}

void ColumnTable::put_ordinal(std::string name, std::vector<std::string> levels, std::vector<int> codes) {
    put(Column{std::move(name), OrdinalColumn{std::move(levels), std::move(codes)}});
}

void ColumnTable::put_text(std::string name, std::vector<std::optional<std::string>> values) {
    put(Column{std::move(name), TextColumn{std::move(values)}});
}

const std::vector<double>& ColumnTable::continuous(std::string_view name) const {
    const auto* c = std::get_if<ContinuousColumn>(&column(name).data);
    if (!c) throw DataError("column '" + std::string(name) + "' is not continuous");
    return c->values;
}

std::vector<double>& ColumnTable::continuous(std::string_view name) {
    Column* col = find_mut(name);
    if (!col) throw DataError("no column named '" + std::string(name) + "'");
    auto* c = std::get_if<ContinuousColumn>(&col->data);
    if (!c) throw DataError("column '" + std::string(name) + "' is not continuous");
    return c->values;
}

const OrdinalColumn& ColumnTable::ordinal(std::string_view name) const {
    const auto* c = std::get_if<OrdinalColumn>(&column(name).data);
    if (!c) throw DataError("column '" + std::string(name) + "' is not ordinal");
    return *c;
}

const TextColumn& ColumnTable::text(std::string_view name) const {
    const auto* c = std::get_if<TextColumn>(&column(name).data);
    if (!c) throw DataError("column '" + std::string(name) + "' is not a text column");
    return *c;
}

ColumnTable ColumnTable::take_rows(std::span<const std::size_t> rows) const {
    ColumnTable out;
    for (const auto& col : columns_) {
        Column copy{col.name, {}};
        std::visit(
            [&](const auto& src) {
                using T = std::decay_t<decltype(src)>;
                T dst;
                if constexpr (std::is_same_v<T, OrdinalColumn>) {
                    dst.levels = src.levels;
                    for (std::size_t r : rows) dst.codes.push_back(src.codes.at(r));
                } else {
                    for (std::size_t r : rows) dst.values.push_back(src.values.at(r));
                }
                copy.data = std::move(dst);
            },
            col.data);
        out.put(std::move(copy));
    }
    out.nrows_ = rows.size();
    return out;
}

bool ColumnTable::operator==(const ColumnTable& other) const {
    if (nrows_ != other.nrows_ || columns_.size() != other.columns_.size()) return false;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const Column& a = columns_[i];
        const Column& b = other.columns_[i];
        if (a.name != b.name || a.data.index() != b.data.index()) return false;
        if (const auto* ca = std::get_if<ContinuousColumn>(&a.data)) {
            const auto& cb = std::get<ContinuousColumn>(b.data);
            for (std::size_t r = 0; r < nrows_; ++r) {
                const double x = ca->values[r];
                const double y = cb.values[r];
                if (is_missing(x) != is_missing(y) || (!is_missing(x) && x != y)) return false;
            }
        } else if (const auto* oa = std::get_if<OrdinalColumn>(&a.data)) {
            const auto& ob = std::get<OrdinalColumn>(b.data);
            if (oa->levels != ob.levels || oa->codes != ob.codes) return false;
        } else {
            if (std::get<TextColumn>(a.data).values != std::get<TextColumn>(b.data).values) return false;
        }
    }
    return true;
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line, std::size_t lineno) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(ch);
        }
    }
    if (quoted) throw ParseError(lineno, "unterminated quoted field");
    fields.push_back(std::move(field));
    return fields;
}

bool missing_field(std::string_view f) { return f.empty() || f == "NA"; }

std::optional<double> parse_double(std::string_view f) {
    while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
    while (!f.empty() && f.back() == ' ') f.remove_suffix(1);
    if (!f.empty() && f.front() == '+') f.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
    if (ec != std::errc() || ptr != f.data() + f.size()) return std::nullopt;
    return value;
}

}  // namespace

ColumnTable parse_csv(std::string_view text, const OrdinalLevels& ordinal) {
    std::vector<std::vector<std::string>> rows;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++lineno;
        if (!line.empty()) rows.push_back(split_csv_line(line, lineno));
        pos = end + 1;
    }
    if (rows.empty()) throw DataError("CSV input has no header row");

    const std::vector<std::string> header = rows.front();
    const std::size_t nrows = rows.size() - 1;
    for (std::size_t r = 1; r < rows.size(); ++r)
        if (rows[r].size() != header.size())
            throw ParseError(r + 1, "expected " + std::to_string(header.size()) + " fields, found " +
                                        std::to_string(rows[r].size()));

    ColumnTable table;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string& name = header[c];
        if (auto it = ordinal.find(name); it != ordinal.end()) {
            const auto& levels = it->second;
            std::vector<int> codes(nrows, kMissingCode);
            for (std::size_t r = 0; r < nrows; ++r) {
                const std::string& f = rows[r + 1][c];
                if (missing_field(f)) continue;
                auto lv = std::find(levels.begin(), levels.end(), f);
                if (lv == levels.end())
                    throw ParseError(r + 2, "'" + f + "' is not a declared level of '" + name + "'");
                codes[r] = static_cast<int>(lv - levels.begin());
            }
            table.put_ordinal(name, levels, std::move(codes));
            continue;
        }
        std::vector<double> values(nrows, kMissing);
        bool numeric = true;
        for (std::size_t r = 0; r < nrows && numeric; ++r) {
            const std::string& f = rows[r + 1][c];
            if (missing_field(f)) continue;
            auto v = parse_double(f);
            if (!v) numeric = false;
            else values[r] = *v;
        }
        if (numeric) {
            table.put_continuous(name, std::move(values));
        } else {
            std::vector<std::optional<std::string>> text_values(nrows);
            for (std::size_t r = 0; r < nrows; ++r)
                if (!missing_field(rows[r + 1][c])) text_values[r] = rows[r + 1][c];
            table.put_text(name, std::move(text_values));
        }
    }
    for (const auto& [name, levels] : ordinal) {
        (void)levels;
        if (!table.has(name)) throw DataError("declared ordinal column '" + name + "' not found in CSV");
    }
    return table;
}

ColumnTable read_csv(const std::filesystem::path& path, const OrdinalLevels& ordinal) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str(), ordinal);
}

std::string format_number(double value) {
    if (is_missing(value)) return "NA";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw NumericError("cannot format number");
    return std::string(buf, ptr);
}

namespace {

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

}  // namespace

std::string format_csv(const ColumnTable& table) {
    std::string out;
    for (std::size_t c = 0; c < table.ncols(); ++c) {
        if (c) out.push_back(',');
        out += quote_if_needed(table.columns()[c].name);
    }
    out.push_back('\n');
    for (std::size_t r = 0; r < table.nrows(); ++r) {
        for (std::size_t c = 0; c < table.ncols(); ++c) {
            if (c) out.push_back(',');
            const Column& col = table.columns()[c];
            if (col.missing(r)) {
                out += "NA";
            } else if (const auto* cc = std::get_if<ContinuousColumn>(&col.data)) {
                out += format_number(cc->values[r]);
            } else if (const auto* oc = std::get_if<OrdinalColumn>(&col.data)) {
                out += quote_if_needed(oc->levels[static_cast<std::size_t>(oc->codes[r])]);
            } else {
                out += quote_if_needed(*std::get<TextColumn>(col.data).values[r]);
            }
        }
        out.push_back('\n');
    }
    return out;
}

}  // namespace twinsem
