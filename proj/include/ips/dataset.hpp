#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ips/common.hpp"

namespace ips {

enum class MissingPolicy { fail, drop_row };

struct ColumnSchema {
    std::string outcome_column;
    std::string treatment_column;
    std::vector<std::string> covariate_columns;
    std::vector<std::string> categorical_columns;  // subset of covariate_columns
    std::optional<std::string> strata_column;
    MissingPolicy missing_policy = MissingPolicy::fail;

    void validate() const;  // disjoint names, categorical subset
};

// Raw parsed table; cells kept as text until encoding.
struct RawTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const;  // -1 when absent
};

RawTable read_csv(const std::string& path);  // RFC 4180, UTF-8, header row

// How one encoded column was derived from a raw column.
struct EncodedColumn {
    std::string name;         // encoded column label
    std::string source;       // raw column name
    bool indicator = false;   // one-hot level indicator vs standardized numeric
    std::string level;        // level encoded (indicator columns)
    double center = 0.0;      // numeric: training mean
    double scale = 1.0;       // numeric: training sample sd (1 when constant)
};

struct EncodingMap {
    std::vector<EncodedColumn> columns;
};

struct AnalysisFrame {
    Matrix x;                           // n x p encoded covariates
    Vector a;                           // exposure in {0,1}
    Vector y;                           // outcome in {0,1}
    std::vector<std::string> strata;    // empty when no strata column
    std::vector<std::string> unit_ids;
    EncodingMap encoding;
    std::string outcome_label = "y";

    // Raw covariate view retained for summary tables.
    std::vector<std::string> raw_names;
    std::vector<bool> raw_categorical;
    std::vector<std::vector<std::string>> raw_values;  // per raw column, length n

    int n() const { return static_cast<int>(y.size()); }
    int p() const { return static_cast<int>(x.cols()); }
    bool has_strata() const { return !strata.empty(); }

    void validate() const;
};

AnalysisFrame load_csv(const std::string& path, const ColumnSchema& schema);
AnalysisFrame encode_covariates(const RawTable& table, const ColumnSchema& schema);

std::vector<std::pair<std::string, AnalysisFrame>> stratify(const AnalysisFrame& frame,
                                                            int min_rows = 50);

AnalysisFrame redefine_outcome(const AnalysisFrame& frame, const Vector& new_outcome,
                               const std::string& label);

enum class GroupBy { treatment, strata };

struct SummaryRow {
    std::string variable;
    std::string level;       // empty for numeric rows
    bool categorical = false;
    std::vector<double> primary;    // count (categorical) or mean (numeric), per group
    std::vector<double> secondary;  // percent or sd, per group
};

struct SummaryTable {
    std::vector<std::string> group_labels;
    std::vector<int> group_sizes;
    std::vector<SummaryRow> rows;

    std::string to_csv() const;
    std::string to_json() const;
};

SummaryTable summarize(const AnalysisFrame& frame, GroupBy group_by);

// Writes encoded columns plus a/y/strata at 17 significant digits; reloading
// with the matching schema reproduces x, a, y bit for bit.
void write_frame_csv(const AnalysisFrame& frame, const std::string& path);

}  // namespace ips
