#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsexam/error.hpp"
#include "tsexam/synth.hpp"

namespace tsexam::data {

/// One dataset entry: the series x_i (one or more channels) and its metadata z_i.
struct Sample {
    std::vector<std::vector<double>> channels;
    std::map<std::string, json> metadata;  // values are JSON strings or numbers
};

enum class ColumnType { number, string };
std::string to_string(ColumnType t);

struct Column {
    std::string name;
    ColumnType type = ColumnType::string;

    friend bool operator==(const Column&, const Column&) = default;
};

struct Schema {
    std::vector<std::string> channels;
    std::vector<Column> metadata;

    const Column* find_metadata(const std::string& name) const;
};

class DatasetAdapter {
public:
    virtual ~DatasetAdapter() = default;
    virtual std::size_t size() const = 0;
    /// Throws InvalidParameter when index >= size().
    virtual Sample query(std::size_t index) const = 0;
    virtual const Schema& schema() const = 0;
};

using DatasetPtr = std::shared_ptr<const DatasetAdapter>;

/// Adapter over samples held in memory; the schema is inferred from the samples.
class InMemoryDataset : public DatasetAdapter {
public:
    InMemoryDataset(std::vector<Sample> samples, std::vector<std::string> channel_names);
    std::size_t size() const override { return samples_.size(); }
    Sample query(std::size_t index) const override;
    const Schema& schema() const override { return schema_; }

private:
    std::vector<Sample> samples_;
    Schema schema_;
};

struct ColumnMapping {
    std::vector<std::string> value_columns;
    std::vector<std::string> metadata_columns;
    std::optional<std::string> group_by;
    std::optional<std::string> sort_by;
};

ColumnMapping mapping_from_json(const json& j);

/// Bad input file content. row() is the 1-based data row (header excluded), 0 when not row-specific.
class DatasetError : public Error {
public:
    DatasetError(std::size_t row, const std::string& what)
        : Error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Loads delimited text (.csv, .tsv) or newline-delimited JSON records (.jsonl, .ndjson).
/// Rows with an empty value cell are skipped; groups left empty are dropped with a warning.
DatasetPtr load_tabular(const std::filesystem::path& path, const ColumnMapping& mapping,
                        std::vector<std::string>* warnings = nullptr);

/// Splits one delimited line honoring double quotes ("" escapes a quote).
std::vector<std::string> split_delimited(const std::string& line, char delimiter);

/// Adapter materializing synth recipes on query. The single channel is named "value".
DatasetPtr synthetic_adapter(std::vector<std::pair<synth::Recipe, json>> specs);

}  // namespace tsexam::data
