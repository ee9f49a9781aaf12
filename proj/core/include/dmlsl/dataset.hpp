#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dmlsl {

using Bytes = std::vector<std::uint8_t>;

// Outcome, treatment and control assignment over named columns.
struct ColumnRoles {
  std::string y_col;
  std::string d_col;
  std::vector<std::string> x_cols;

  bool operator==(const ColumnRoles&) const = default;
};

struct Column {
  std::string name;
  std::vector<double> values;

  bool operator==(const Column&) const = default;
};

// Column-labeled numeric table with validated roles. Immutable once built.
//
// Invariants: n_obs >= 2, equal-length columns, unique non-empty column names
// without ',' or newlines, finite values, role columns present and pairwise
// disjoint, x_cols non-empty and duplicate-free.
class DmlDataset {
 public:
  // Throws DmlError (MissingColumn, EmptyData, NonNumericCell, InvalidDataset).
  static DmlDataset create(std::vector<Column> columns, ColumnRoles roles);

  std::size_t n_obs() const noexcept { return n_obs_; }
  const std::vector<Column>& columns() const noexcept { return columns_; }
  const ColumnRoles& roles() const noexcept { return roles_; }

  bool has_column(std::string_view name) const noexcept;
  // Throws MissingColumn.
  std::span<const double> column(std::string_view name) const;

  bool operator==(const DmlDataset&) const = default;

 private:
  DmlDataset() = default;

  std::size_t n_obs_ = 0;
  std::vector<Column> columns_;
  ColumnRoles roles_;
};

// Header: comma-delimited names. Rows: decimal floats, no quoting.
DmlDataset load_csv(const std::filesystem::path& path, const ColumnRoles& roles);
DmlDataset parse_csv(std::string_view text, const ColumnRoles& roles);
// All columns in order, floats in shortest round-trip form.
std::string to_csv(const DmlDataset& ds);
void write_csv(const DmlDataset& ds, const std::filesystem::path& path);

// Canonical byte layout used for content addressing:
//   "dmlds 1\n" "n_obs <N>\n" "columns <c1,c2,...>\n" "y <name>\n" "d <name>\n"
//   "x <x1,x2,...>\n" "data\n", then every column in header order as N
//   little-endian IEEE-754 binary64 values.
Bytes serialize_dataset(const DmlDataset& ds);
DmlDataset deserialize_dataset(std::span<const std::uint8_t> bytes);

// Hex SHA-256 over the column names and role assignment.
std::string schema_digest(const DmlDataset& ds);

struct DatasetRef {
  std::string store_key;
  std::string schema_digest;

  bool operator==(const DatasetRef&) const = default;
};

// Content-addressed blob store: one file per key under root, named by the
// hex SHA-256 of its content. Safe for concurrent readers; concurrent writes
// of the same content race benignly through write-to-temp + rename.
class ObjectStore {
 public:
  // Creates root if missing. Throws StoreUnavailable if that fails.
  explicit ObjectStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  // Idempotent. Throws StoreUnavailable when the blob cannot be written.
  std::string put(std::span<const std::uint8_t> bytes) const;
  // Throws UnknownKey.
  Bytes get(std::string_view key) const;
  bool contains(std::string_view key) const;

 private:
  std::filesystem::path path_for(std::string_view key) const;

  std::filesystem::path root_;
};

DatasetRef store_dataset(const DmlDataset& ds, const ObjectStore& store);
// Verifies the blob hash and the schema digest. Throws UnknownKey, SchemaMismatch.
DmlDataset fetch_dataset(const DatasetRef& ref, const ObjectStore& store);

}  // namespace dmlsl
