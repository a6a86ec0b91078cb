#include "ips/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ips {

namespace {

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end == begin + s.size() && std::isfinite(out);
}

// Accepts the {0,1} and {"true","false"} literals only.
bool parse_binary(const std::string& s, double& out) {
    if (s == "0" || s == "false") {
        out = 0.0;
        return true;
    }
    if (s == "1" || s == "true") {
        out = 1.0;
        return true;
    }
    return false;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

}  // namespace

void ColumnSchema::validate() const {
    if (outcome_column.empty()) throw ConfigError("schema: outcome column name is empty");
    if (treatment_column.empty()) throw ConfigError("schema: treatment column name is empty");
    if (outcome_column == treatment_column)
        throw ConfigError("schema: outcome and treatment columns must differ");
    std::set<std::string> cov(covariate_columns.begin(), covariate_columns.end());
    if (cov.size() != covariate_columns.size())
        throw ConfigError("schema: duplicate covariate column");
    if (cov.count(outcome_column))
        throw ConfigError("schema: outcome column '" + outcome_column + "' listed as covariate");
    if (cov.count(treatment_column))
        throw ConfigError("schema: treatment column '" + treatment_column + "' listed as covariate");
    for (const auto& c : categorical_columns) {
        if (!cov.count(c))
            throw ConfigError("schema: categorical column '" + c + "' is not a covariate");
    }
}

int RawTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

RawTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    auto end_field = [&]() {
        record.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_record = [&]() {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        char c = content[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            // swallowed; CRLF handled at '\n'
        } else if (c == '\n') {
            end_record();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (in_quotes) throw DataError("unterminated quoted field in " + path);
    if (field_started || !record.empty() || !field.empty()) end_record();

    if (records.empty()) throw DataError("empty CSV file: " + path);
    RawTable table;
    table.columns = records.front();
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() == 1 && records[r][0].empty()) continue;  // trailing blank line
        if (records[r].size() != table.columns.size())
            throw DataError(path + ": row " + std::to_string(r) + " has " +
                            std::to_string(records[r].size()) + " fields, expected " +
                            std::to_string(table.columns.size()));
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

void AnalysisFrame::validate() const {
    const int rows = n();
    if (rows < 1) throw DataError("frame must contain at least one row");
    if (x.rows() != rows || a.size() != rows ||
        static_cast<int>(unit_ids.size()) != rows)
        throw DataError("frame vectors and matrix must share the same row count");
    if (!strata.empty() && static_cast<int>(strata.size()) != rows)
        throw DataError("strata labels must cover every row");
    for (int i = 0; i < rows; ++i) {
        if (a[i] != 0.0 && a[i] != 1.0)
            throw DataError("non-binary treatment value at row " + std::to_string(i));
        if (y[i] != 0.0 && y[i] != 1.0)
            throw DataError("non-binary outcome value at row " + std::to_string(i));
    }
    if (!x.allFinite()) throw DataError("covariate matrix contains non-finite values");
}

AnalysisFrame encode_covariates(const RawTable& table, const ColumnSchema& schema) {
    schema.validate();
    std::vector<std::string> needed = {schema.outcome_column, schema.treatment_column};
    needed.insert(needed.end(), schema.covariate_columns.begin(), schema.covariate_columns.end());
    if (schema.strata_column) needed.push_back(*schema.strata_column);
    std::vector<int> col_of(needed.size());
    for (std::size_t i = 0; i < needed.size(); ++i) {
        col_of[i] = table.column_index(needed[i]);
        if (col_of[i] < 0) throw DataError("missing column: " + needed[i]);
    }

    std::set<std::string> categorical(schema.categorical_columns.begin(),
                                      schema.categorical_columns.end());

    // All-missing covariate columns are an error under either policy.
    for (const auto& cov : schema.covariate_columns) {
        int ci = table.column_index(cov);
        bool any = false;
        for (const auto& row : table.rows)
            if (!row[ci].empty()) {
                any = true;
                break;
            }
        if (!any && !table.rows.empty()) throw DataError("column '" + cov + "' is entirely missing");
    }

    // Row filter per missing policy.
    std::vector<int> kept;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        bool missing = false;
        for (int ci : col_of)
            if (table.rows[r][ci].empty()) {
                missing = true;
                if (schema.missing_policy == MissingPolicy::fail)
                    throw DataError("missing value in row " + std::to_string(r + 1) +
                                    " (policy=fail)");
                break;
            }
        if (!missing) kept.push_back(static_cast<int>(r));
    }
    if (kept.empty()) throw DataError("empty frame after dropping rows with missing values");
    const int n = static_cast<int>(kept.size());

    AnalysisFrame frame;
    frame.a.resize(n);
    frame.y.resize(n);
    frame.unit_ids.resize(n);
    frame.outcome_label = schema.outcome_column;

    const int yi = col_of[0];
    const int ai = col_of[1];
    for (int i = 0; i < n; ++i) {
        const auto& row = table.rows[kept[i]];
        if (!parse_binary(row[yi], frame.y[i]))
            throw DataError("non-binary outcome value '" + row[yi] + "' in column '" +
                            schema.outcome_column + "', row " + std::to_string(kept[i] + 1));
        if (!parse_binary(row[ai], frame.a[i]))
            throw DataError("non-binary treatment value '" + row[ai] + "' in column '" +
                            schema.treatment_column + "', row " + std::to_string(kept[i] + 1));
        frame.unit_ids[i] = std::to_string(kept[i] + 1);
    }
    if (schema.strata_column) {
        const int si = table.column_index(*schema.strata_column);
        frame.strata.resize(n);
        for (int i = 0; i < n; ++i) frame.strata[i] = table.rows[kept[i]][si];
    }

    // Encode covariates column by column, in schema order.
    std::vector<Vector> encoded;
    for (const auto& cov : schema.covariate_columns) {
        const int ci = table.column_index(cov);
        frame.raw_names.push_back(cov);
        frame.raw_categorical.push_back(categorical.count(cov) > 0);
        std::vector<std::string> raw(n);
        for (int i = 0; i < n; ++i) raw[i] = table.rows[kept[i]][ci];

        if (categorical.count(cov)) {
            std::set<std::string> levels(raw.begin(), raw.end());
            if (levels.size() > 64)
                throw DataError("column '" + cov + "' has " + std::to_string(levels.size()) +
                                " levels (limit 64)");
            // Lexicographically first level is the dropped reference.
            bool first = true;
            for (const auto& level : levels) {
                if (first) {
                    first = false;
                    continue;
                }
                Vector col(n);
                for (int i = 0; i < n; ++i) col[i] = raw[i] == level ? 1.0 : 0.0;
                encoded.push_back(col);
                EncodedColumn ec;
                ec.name = cov + "=" + level;
                ec.source = cov;
                ec.indicator = true;
                ec.level = level;
                frame.encoding.columns.push_back(ec);
            }
        } else {
            Vector col(n);
            for (int i = 0; i < n; ++i) {
                if (!parse_double(raw[i], col[i]))
                    throw DataError("unparseable numeric cell '" + raw[i] + "' in column '" + cov +
                                    "', row " + std::to_string(kept[i] + 1));
            }
            double center = col.mean();
            double sd = sample_sd(col);
            EncodedColumn ec;
            ec.name = cov;
            ec.source = cov;
            ec.center = center;
            ec.scale = sd > 0.0 ? sd : 1.0;
            if (sd > 0.0)
                col = (col.array() - center) / sd;
            else
                col.setZero();  // zero-variance rule
            encoded.push_back(col);
            frame.encoding.columns.push_back(ec);
        }
        frame.raw_values.push_back(std::move(raw));
    }

    frame.x.resize(n, static_cast<int>(encoded.size()));
    for (std::size_t j = 0; j < encoded.size(); ++j) frame.x.col(static_cast<int>(j)) = encoded[j];
    frame.validate();
    return frame;
}

AnalysisFrame load_csv(const std::string& path, const ColumnSchema& schema) {
    return encode_covariates(read_csv(path), schema);
}

namespace {

AnalysisFrame take_rows(const AnalysisFrame& frame, const std::vector<int>& rows) {
    AnalysisFrame out;
    const int m = static_cast<int>(rows.size());
    out.x.resize(m, frame.x.cols());
    out.a.resize(m);
    out.y.resize(m);
    out.unit_ids.resize(m);
    if (frame.has_strata()) out.strata.resize(m);
    out.encoding = frame.encoding;
    out.outcome_label = frame.outcome_label;
    out.raw_names = frame.raw_names;
    out.raw_categorical = frame.raw_categorical;
    out.raw_values.resize(frame.raw_values.size());
    for (auto& v : out.raw_values) v.resize(m);
    for (int i = 0; i < m; ++i) {
        const int r = rows[i];
        out.x.row(i) = frame.x.row(r);
        out.a[i] = frame.a[r];
        out.y[i] = frame.y[r];
        out.unit_ids[i] = frame.unit_ids[r];
        if (frame.has_strata()) out.strata[i] = frame.strata[r];
        for (std::size_t c = 0; c < frame.raw_values.size(); ++c)
            out.raw_values[c][i] = frame.raw_values[c][r];
    }
    return out;
}

}  // namespace

std::vector<std::pair<std::string, AnalysisFrame>> stratify(const AnalysisFrame& frame,
                                                            int min_rows) {
    if (!frame.has_strata()) throw DataError("stratify: frame has no strata labels");
    std::map<std::string, std::vector<int>> groups;
    for (int i = 0; i < frame.n(); ++i) groups[frame.strata[i]].push_back(i);
    for (const auto& [label, rows] : groups)
        if (static_cast<int>(rows.size()) < min_rows)
            throw DataError("stratum '" + label + "' has " + std::to_string(rows.size()) +
                            " rows, below the minimum of " + std::to_string(min_rows));
    std::vector<std::pair<std::string, AnalysisFrame>> out;
    for (const auto& [label, rows] : groups) out.emplace_back(label, take_rows(frame, rows));
    return out;
}

AnalysisFrame redefine_outcome(const AnalysisFrame& frame, const Vector& new_outcome,
                               const std::string& label) {
    if (new_outcome.size() != frame.y.size())
        throw DataError("redefine_outcome: new outcome has length " +
                        std::to_string(new_outcome.size()) + ", expected " +
                        std::to_string(frame.y.size()));
    for (Eigen::Index i = 0; i < new_outcome.size(); ++i)
        if (new_outcome[i] != 0.0 && new_outcome[i] != 1.0)
            throw DataError("redefine_outcome: non-binary entry at row " + std::to_string(i));
    AnalysisFrame out = frame;
    out.y = new_outcome;
    out.outcome_label = label;
    return out;
}

SummaryTable summarize(const AnalysisFrame& frame, GroupBy group_by) {
    SummaryTable table;
    std::vector<std::vector<int>> members;
    if (group_by == GroupBy::treatment) {
        table.group_labels = {"A=0", "A=1"};
        members.resize(2);
        for (int i = 0; i < frame.n(); ++i) members[frame.a[i] > 0.5 ? 1 : 0].push_back(i);
        // Drop an empty arm so counts stay meaningful on single-arm frames.
        if (members[0].empty()) {
            members.erase(members.begin());
            table.group_labels.erase(table.group_labels.begin());
        } else if (members[1].empty()) {
            members.pop_back();
            table.group_labels.pop_back();
        }
    } else {
        if (!frame.has_strata()) throw DataError("summarize: frame has no strata labels");
        std::map<std::string, std::vector<int>> groups;
        for (int i = 0; i < frame.n(); ++i) groups[frame.strata[i]].push_back(i);
        for (auto& [label, rows] : groups) {
            table.group_labels.push_back(label);
            members.push_back(std::move(rows));
        }
    }
    for (const auto& g : members) table.group_sizes.push_back(static_cast<int>(g.size()));
    const std::size_t ngroups = members.size();

    auto numeric_row = [&](const std::string& name, const Vector& values) {
        SummaryRow row;
        row.variable = name;
        row.categorical = false;
        for (std::size_t g = 0; g < ngroups; ++g) {
            Vector sub(members[g].size());
            for (std::size_t k = 0; k < members[g].size(); ++k) sub[k] = values[members[g][k]];
            row.primary.push_back(sub.size() ? sub.mean() : 0.0);
            row.secondary.push_back(sample_sd(sub));
        }
        table.rows.push_back(row);
    };

    numeric_row(frame.outcome_label, frame.y);
    if (group_by == GroupBy::strata) numeric_row("treatment", frame.a);

    for (std::size_t c = 0; c < frame.raw_names.size(); ++c) {
        if (frame.raw_categorical[c]) {
            std::set<std::string> levels(frame.raw_values[c].begin(), frame.raw_values[c].end());
            for (const auto& level : levels) {
                SummaryRow row;
                row.variable = frame.raw_names[c];
                row.level = level;
                row.categorical = true;
                for (std::size_t g = 0; g < ngroups; ++g) {
                    int count = 0;
                    for (int i : members[g])
                        if (frame.raw_values[c][i] == level) ++count;
                    row.primary.push_back(count);
                    row.secondary.push_back(members[g].empty()
                                                ? 0.0
                                                : 100.0 * count / static_cast<double>(members[g].size()));
                }
                table.rows.push_back(row);
            }
        } else {
            Vector values(frame.n());
            for (int i = 0; i < frame.n(); ++i) {
                double v = 0.0;
                parse_double(frame.raw_values[c][i], v);
                values[i] = v;
            }
            numeric_row(frame.raw_names[c], values);
        }
    }
    return table;
}

std::string SummaryTable::to_csv() const {
    std::ostringstream os;
    os << "variable,level,statistic";
    for (const auto& g : group_labels) os << "," << csv_escape(g);
    os << "\n";
    os << "n,,count";
    for (int s : group_sizes) os << "," << s;
    os << "\n";
    for (const auto& row : rows) {
        os << csv_escape(row.variable) << "," << csv_escape(row.level) << ","
           << (row.categorical ? "count" : "mean");
        for (double v : row.primary) os << "," << format_double(v);
        os << "\n";
        os << csv_escape(row.variable) << "," << csv_escape(row.level) << ","
           << (row.categorical ? "percent" : "sd");
        for (double v : row.secondary) os << "," << format_double(v);
        os << "\n";
    }
    return os.str();
}

std::string SummaryTable::to_json() const {
    // Rendered by hand to keep the dataset module free of the JSON dependency;
    // labels are escaped minimally (quotes and backslashes).
    auto esc = [](const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '"' || c == '\\') out += '\\';
            out += c;
        }
        return out;
    };
    std::ostringstream os;
    os << "{\"schema_version\":1,\"groups\":[";
    for (std::size_t g = 0; g < group_labels.size(); ++g) {
        if (g) os << ",";
        os << "{\"label\":\"" << esc(group_labels[g]) << "\",\"n\":" << group_sizes[g] << "}";
    }
    os << "],\"rows\":[";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (r) os << ",";
        const auto& row = rows[r];
        os << "{\"variable\":\"" << esc(row.variable) << "\",\"level\":\"" << esc(row.level)
           << "\",\"kind\":\"" << (row.categorical ? "categorical" : "numeric") << "\","
           << (row.categorical ? "\"count\":[" : "\"mean\":[");
        for (std::size_t g = 0; g < row.primary.size(); ++g)
            os << (g ? "," : "") << format_double(row.primary[g]);
        os << "]," << (row.categorical ? "\"percent\":[" : "\"sd\":[");
        for (std::size_t g = 0; g < row.secondary.size(); ++g)
            os << (g ? "," : "") << format_double(row.secondary[g]);
        os << "]}";
    }
    os << "]}";
    return os.str();
}

void write_frame_csv(const AnalysisFrame& frame, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << "unit_id";
    for (int j = 0; j < frame.p(); ++j) {
        std::string name = j < static_cast<int>(frame.encoding.columns.size())
                               ? frame.encoding.columns[j].name
                               : "x" + std::to_string(j + 1);
        out << "," << csv_escape(name);
    }
    out << ",a,y";
    if (frame.has_strata()) out << ",stratum";
    out << "\n";
    for (int i = 0; i < frame.n(); ++i) {
        out << csv_escape(frame.unit_ids[i]);
        for (int j = 0; j < frame.p(); ++j) out << "," << format_double(frame.x(i, j));
        out << "," << static_cast<int>(frame.a[i]) << "," << static_cast<int>(frame.y[i]);
        if (frame.has_strata()) out << "," << csv_escape(frame.strata[i]);
        out << "\n";
    }
}

}  // namespace ips
