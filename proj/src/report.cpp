#include "soupkit/report.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

namespace soupkit::report {

using nlohmann::json;

namespace {

std::string fmt(double v) { return json(v).dump(); }

// Decimal rounding so cells print as short exact numbers in both formats.
double round6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::strtod(buf, nullptr);
}

}  // namespace

Table build_table(const std::vector<bench::EvalResult>& results) {
    if (results.empty()) throw InvalidArgumentError("report: no eval results");

    const auto& suite = results.front().per_shift;
    Table table;
    table.columns.push_back("clean");
    for (const auto& [id, acc] : suite) table.columns.push_back(id);
    table.columns.push_back("Avg OOD");

    for (const auto& r : results) {
        if (r.per_shift.size() != suite.size())
            throw SchemaMismatchError("report: result '" + r.label +
                                      "' has a different shift suite");
        for (std::size_t i = 0; i < suite.size(); ++i)
            if (r.per_shift[i].first != suite[i].first)
                throw SchemaMismatchError("report: result '" + r.label + "' shift order differs (" +
                                          r.per_shift[i].first + " vs " + suite[i].first + ")");
        Table::Row row;
        row.label = r.label;
        row.values.push_back(round6(r.clean));
        double sum = 0.0;
        for (const auto& [id, acc] : r.per_shift) {
            row.values.push_back(round6(acc));
            sum += row.values.back();
        }
        row.values.push_back(suite.empty() ? 0.0
                                           : round6(sum / static_cast<double>(suite.size())));
        row.marks.assign(row.values.size(), "");
        table.rows.push_back(std::move(row));
    }

    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        double best = table.rows[0].values[c];
        for (const auto& row : table.rows) best = std::max(best, row.values[c]);
        double second = -1.0;
        bool has_second = false;
        for (const auto& row : table.rows)
            if (row.values[c] < best && (!has_second || row.values[c] > second)) {
                second = row.values[c];
                has_second = true;
            }
        for (auto& row : table.rows) {
            if (row.values[c] == best)
                row.marks[c] = "best";
            else if (has_second && row.values[c] == second)
                row.marks[c] = "second";
        }
    }
    return table;
}

std::string to_markdown(const Table& table) {
    std::ostringstream out;
    out << "| model |";
    for (const auto& c : table.columns) out << " " << c << " |";
    out << "\n|";
    for (std::size_t c = 0; c <= table.columns.size(); ++c) out << " --- |";
    out << "\n";
    for (const auto& row : table.rows) {
        out << "| " << row.label << " |";
        for (std::size_t c = 0; c < row.values.size(); ++c) {
            std::string cell = fmt(row.values[c]);
            if (row.marks[c] == "best")
                cell = "**" + cell + "**";
            else if (row.marks[c] == "second")
                cell = "*" + cell + "*";
            out << " " << cell << " |";
        }
        out << "\n";
    }
    return out.str();
}

std::string to_json(const Table& table) {
    json rows = json::array();
    for (const auto& row : table.rows)
        rows.push_back({{"label", row.label}, {"values", row.values}, {"marks", row.marks}});
    json j{{"columns", table.columns}, {"rows", rows}};
    return j.dump(2) + "\n";
}

}  // namespace soupkit::report
