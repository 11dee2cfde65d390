#pragma once

#include <string>
#include <vector>

#include "soupkit/bench.hpp"

namespace soupkit::report {

// Accuracy table: one row per method/model, columns clean + one per shift +
// Avg OOD. Cell marks carry the per-column highlighting ("best", "second",
// or empty), shared by both output formats.
struct Table {
    std::vector<std::string> columns;
    struct Row {
        std::string label;
        std::vector<double> values;
        std::vector<std::string> marks;
    };
    std::vector<Row> rows;
};

// Rows keep input order; every result must carry the same shift suite in the
// same order (SchemaMismatchError otherwise; InvalidArgumentError when empty).
// Cells are rounded to 6 decimals so they print as short exact numbers; the
// Avg OOD column is the unweighted mean of the rounded shift cells, rounded
// the same way. Ties share a mark; "second" marks the next distinct value.
Table build_table(const std::vector<bench::EvalResult>& results);

// Markdown pipe table; best cells wrapped in ** and second-best in *.
// Numbers render shortest-roundtrip, identical to the JSON output.
std::string to_markdown(const Table& table);

// {"columns": [...], "rows": [{"label", "values", "marks"}]}
std::string to_json(const Table& table);

}  // namespace soupkit::report
