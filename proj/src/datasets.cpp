#include "tsexam/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

namespace tsexam::data {

std::string to_string(ColumnType t) { return t == ColumnType::number ? "number" : "string"; }

const Column* Schema::find_metadata(const std::string& name) const {
    for (const auto& c : metadata) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

namespace {

Schema infer_schema(const std::vector<Sample>& samples, std::vector<std::string> channel_names) {
    Schema schema;
    schema.channels = std::move(channel_names);
    std::map<std::string, bool> all_numeric;
    std::vector<std::string> order;
    for (const auto& s : samples) {
        for (const auto& [k, v] : s.metadata) {
            auto [it, inserted] = all_numeric.emplace(k, true);
            if (inserted) order.push_back(k);
            if (!v.is_number()) it->second = false;
        }
    }
    std::sort(order.begin(), order.end());
    for (const auto& k : order) schema.metadata.push_back({k, all_numeric[k] ? ColumnType::number : ColumnType::string});
    return schema;
}

std::optional<double> parse_number(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

json metadata_value(const std::string& cell) {
    if (auto v = parse_number(cell)) return *v;
    return cell;
}

// One input row, cells keyed by column name.
struct Row {
    std::size_t number = 0;
    std::map<std::string, std::string> cells;
};

std::vector<Row> read_delimited(std::istream& in, char delimiter, std::vector<std::string>& header) {
    std::string line;
    std::vector<Row> rows;
    if (!std::getline(in, line)) throw DatasetError(0, "file is empty; a header row is required");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    header = split_delimited(line, delimiter);
    std::size_t number = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++number;
        if (blank(line)) continue;
        auto cells = split_delimited(line, delimiter);
        if (cells.size() != header.size())
            throw DatasetError(number, "expected " + std::to_string(header.size()) + " cells, found " +
                                           std::to_string(cells.size()));
        Row row;
        row.number = number;
        for (std::size_t i = 0; i < header.size(); ++i) row.cells[header[i]] = std::move(cells[i]);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<Row> read_jsonl(std::istream& in, std::vector<std::string>& columns) {
    std::string line;
    std::vector<Row> rows;
    std::set<std::string> seen;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (blank(line)) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DatasetError(number, std::string("invalid JSON record: ") + e.what());
        }
        if (!j.is_object()) throw DatasetError(number, "record must be an object");
        Row row;
        row.number = number;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (seen.insert(it.key()).second) columns.push_back(it.key());
            if (it->is_string()) {
                row.cells[it.key()] = it->get<std::string>();
            } else if (it->is_null()) {
                row.cells[it.key()] = "";
            } else {
                row.cells[it.key()] = it->dump();
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::vector<std::string> split_delimited(const std::string& line, char delimiter) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == delimiter) {
            out.push_back(std::move(cell));
            cell.clear();
        } else {
            cell += ch;
        }
    }
    out.push_back(std::move(cell));
    return out;
}

InMemoryDataset::InMemoryDataset(std::vector<Sample> samples, std::vector<std::string> channel_names)
    : samples_(std::move(samples)), schema_(infer_schema(samples_, std::move(channel_names))) {}

Sample InMemoryDataset::query(std::size_t index) const {
    if (index >= samples_.size())
        throw InvalidParameter("index", std::to_string(index) + " out of range for size " + std::to_string(size()));
    return samples_[index];
}

ColumnMapping mapping_from_json(const json& j) {
    static const std::set<std::string> known{"value_columns", "metadata_columns", "group_by", "sort_by"};
    if (!j.is_object()) throw InvalidParameter("mapping", "must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw InvalidParameter("mapping." + it.key(), "unknown key");
    }
    ColumnMapping m;
    try {
        m.value_columns = j.at("value_columns").get<std::vector<std::string>>();
        if (j.contains("metadata_columns")) m.metadata_columns = j["metadata_columns"].get<std::vector<std::string>>();
        if (j.contains("group_by") && !j["group_by"].is_null()) m.group_by = j["group_by"].get<std::string>();
        if (j.contains("sort_by") && !j["sort_by"].is_null()) m.sort_by = j["sort_by"].get<std::string>();
    } catch (const json::exception& e) {
        throw InvalidParameter("mapping", e.what());
    }
    return m;
}

DatasetPtr load_tabular(const std::filesystem::path& path, const ColumnMapping& mapping,
                        std::vector<std::string>* warnings) {
    if (mapping.value_columns.empty()) throw InvalidParameter("value_columns", "at least one value column required");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError(0, path.string() + ": cannot open for reading");

    const auto ext = path.extension().string();
    std::vector<std::string> columns;
    std::vector<Row> rows;
    if (ext == ".jsonl" || ext == ".ndjson") {
        rows = read_jsonl(in, columns);
    } else {
        rows = read_delimited(in, ext == ".tsv" ? '\t' : ',', columns);
    }

    auto require = [&](const std::string& col, const char* role) {
        if (std::find(columns.begin(), columns.end(), col) == columns.end())
            throw DatasetError(0, std::string(role) + " column '" + col + "' not found in " + path.string());
    };
    for (const auto& c : mapping.value_columns) require(c, "value");
    for (const auto& c : mapping.metadata_columns) require(c, "metadata");
    if (mapping.group_by) require(*mapping.group_by, "group_by");
    if (mapping.sort_by) require(*mapping.sort_by, "sort_by");

    auto cell = [](const Row& r, const std::string& col) -> const std::string& {
        static const std::string empty;
        auto it = r.cells.find(col);
        return it == r.cells.end() ? empty : it->second;
    };

    // Groups in order of first appearance.
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<const Row*>> groups;
    for (const auto& r : rows) {
        const std::string key = mapping.group_by ? cell(r, *mapping.group_by) : std::string();
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) group_order.push_back(key);
        it->second.push_back(&r);
    }

    std::vector<Sample> samples;
    for (const auto& key : group_order) {
        auto& members = groups[key];
        if (mapping.sort_by) {
            std::stable_sort(members.begin(), members.end(), [&](const Row* x, const Row* y) {
                const auto& cx = cell(*x, *mapping.sort_by);
                const auto& cy = cell(*y, *mapping.sort_by);
                const auto nx = parse_number(cx), ny = parse_number(cy);
                if (nx && ny) return *nx < *ny;
                return cx < cy;
            });
        }
        Sample s;
        s.channels.resize(mapping.value_columns.size());
        std::size_t skipped = 0;
        for (const Row* r : members) {
            bool missing = false;
            for (const auto& col : mapping.value_columns) missing = missing || blank(cell(*r, col));
            if (missing) {
                ++skipped;
                continue;
            }
            for (std::size_t k = 0; k < mapping.value_columns.size(); ++k) {
                const auto& text = cell(*r, mapping.value_columns[k]);
                const auto v = parse_number(text);
                if (!v)
                    throw DatasetError(r->number, "value column '" + mapping.value_columns[k] +
                                                      "' holds non-numeric cell \"" + text + "\"");
                s.channels[k].push_back(*v);
            }
        }
        if (skipped && warnings)
            warnings->push_back("group '" + key + "': skipped " + std::to_string(skipped) + " row(s) with empty values");
        if (s.channels.front().empty()) {
            if (warnings) warnings->push_back("group '" + key + "' has no usable rows; dropped");
            continue;
        }
        const Row& first = *members.front();
        for (const auto& col : mapping.metadata_columns) s.metadata[col] = metadata_value(cell(first, col));
        if (mapping.group_by) s.metadata[*mapping.group_by] = metadata_value(key);
        samples.push_back(std::move(s));
    }
    return std::make_shared<InMemoryDataset>(std::move(samples), mapping.value_columns);
}

namespace {

class SyntheticDataset : public DatasetAdapter {
public:
    explicit SyntheticDataset(std::vector<std::pair<synth::Recipe, json>> specs) : specs_(std::move(specs)) {
        std::vector<Sample> meta_only;
        for (auto& [recipe, meta] : specs_) {
            synth::validate(recipe);
            if (!meta.is_null() && !meta.is_object()) throw InvalidParameter("metadata", "must be an object");
            Sample s;
            if (meta.is_object()) {
                for (auto it = meta.begin(); it != meta.end(); ++it) {
                    if (!it->is_string() && !it->is_number())
                        throw InvalidParameter("metadata." + it.key(), "must be a string or number");
                    s.metadata[it.key()] = *it;
                }
            }
            meta_only.push_back(std::move(s));
        }
        schema_ = infer_schema(meta_only, {"value"});
        metadata_ = std::move(meta_only);
    }

    std::size_t size() const override { return specs_.size(); }

    Sample query(std::size_t index) const override {
        if (index >= specs_.size())
            throw InvalidParameter("index", std::to_string(index) + " out of range for size " + std::to_string(size()));
        Sample s = metadata_[index];
        s.channels.push_back(synth::materialize(specs_[index].first).values);
        return s;
    }

    const Schema& schema() const override { return schema_; }

private:
    std::vector<std::pair<synth::Recipe, json>> specs_;
    std::vector<Sample> metadata_;
    Schema schema_;
};

}  // namespace

DatasetPtr synthetic_adapter(std::vector<std::pair<synth::Recipe, json>> specs) {
    if (specs.empty()) throw InvalidParameter("specs", "at least one recipe required");
    return std::make_shared<SyntheticDataset>(std::move(specs));
}

}  // namespace tsexam::data
