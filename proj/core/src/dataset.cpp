#include "dmlsl/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>
#include <thread>
#include <unordered_set>

#include "dmlsl/error.hpp"
#include "dmlsl/hash.hpp"
#include "dmlsl/numfmt.hpp"

namespace dmlsl {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out.push_back(sep);
    out += items[i];
  }
  return out;
}

void validate_name(const std::string& name) {
  if (name.empty()) throw DmlError(ErrorCode::kInvalidDataset, "empty column name");
  if (name.find_first_of(",\n\r") != std::string::npos) {
    throw DmlError(ErrorCode::kInvalidDataset, fmt::format("column name '{}' contains ',' or a newline", name));
  }
}

std::string schema_text(const std::vector<Column>& columns, const ColumnRoles& roles) {
  std::vector<std::string> names;
  names.reserve(columns.size());
  for (const auto& c : columns) names.push_back(c.name);
  return fmt::format("columns {}\ny {}\nd {}\nx {}\n", join(names, ','), roles.y_col, roles.d_col,
                     join(roles.x_cols, ','));
}

}  // namespace

DmlDataset DmlDataset::create(std::vector<Column> columns, ColumnRoles roles) {
  if (columns.empty()) throw DmlError(ErrorCode::kEmptyData, "dataset has no columns");
  const std::size_t n = columns.front().values.size();
  std::unordered_set<std::string> names;
  for (const auto& col : columns) {
    validate_name(col.name);
    if (!names.insert(col.name).second) {
      throw DmlError(ErrorCode::kInvalidDataset, fmt::format("duplicate column name '{}'", col.name));
    }
    if (col.values.size() != n) {
      throw DmlError(ErrorCode::kInvalidDataset,
                     fmt::format("column '{}' has {} values, expected {}", col.name, col.values.size(), n));
    }
  }
  if (n < 2) throw DmlError(ErrorCode::kEmptyData, fmt::format("need at least 2 observations, got {}", n));

  const auto require = [&](const std::string& name, std::string_view role) {
    if (!names.contains(name)) {
      throw DmlError(ErrorCode::kMissingColumn, fmt::format("{} column '{}' not found", role, name));
    }
  };
  require(roles.y_col, "outcome");
  require(roles.d_col, "treatment");
  if (roles.x_cols.empty()) throw DmlError(ErrorCode::kInvalidDataset, "at least one control column is required");
  std::set<std::string> seen_x;
  for (const auto& x : roles.x_cols) {
    require(x, "control");
    if (!seen_x.insert(x).second) {
      throw DmlError(ErrorCode::kInvalidDataset, fmt::format("control column '{}' listed twice", x));
    }
  }
  if (roles.y_col == roles.d_col || seen_x.contains(roles.y_col) || seen_x.contains(roles.d_col)) {
    throw DmlError(ErrorCode::kInvalidDataset, "outcome, treatment and control roles must be disjoint");
  }

  for (const auto& col : columns) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(col.values[i])) {
        throw DmlError(ErrorCode::kNonNumericCell,
                       fmt::format("non-finite value in column '{}' at row {}", col.name, i));
      }
    }
  }

  DmlDataset ds;
  ds.n_obs_ = n;
  ds.columns_ = std::move(columns);
  ds.roles_ = std::move(roles);
  return ds;
}

bool DmlDataset::has_column(std::string_view name) const noexcept {
  return std::any_of(columns_.begin(), columns_.end(), [&](const Column& c) { return c.name == name; });
}

std::span<const double> DmlDataset::column(std::string_view name) const {
  for (const auto& c : columns_) {
    if (c.name == name) return c.values;
  }
  throw DmlError(ErrorCode::kMissingColumn, fmt::format("column '{}' not found", name));
}

DmlDataset parse_csv(std::string_view text, const ColumnRoles& roles) {
  std::vector<std::string_view> lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw DmlError(ErrorCode::kEmptyData, "csv has no header row");

  std::vector<Column> columns;
  for (auto name : split(lines.front(), ',')) columns.push_back({std::string(trim(name)), {}});

  // Role columns are checked against the header before parsing any cell.
  const auto in_header = [&](const std::string& name) {
    return std::any_of(columns.begin(), columns.end(), [&](const Column& c) { return c.name == name; });
  };
  for (const std::string* role : {&roles.y_col, &roles.d_col}) {
    if (!in_header(*role)) throw DmlError(ErrorCode::kMissingColumn, fmt::format("column '{}' not in header", *role));
  }
  for (const auto& x : roles.x_cols) {
    if (!in_header(x)) throw DmlError(ErrorCode::kMissingColumn, fmt::format("column '{}' not in header", x));
  }

  for (auto& c : columns) c.values.reserve(lines.size() - 1);
  for (std::size_t row = 1; row < lines.size(); ++row) {
    if (trim(lines[row]).empty()) continue;
    const auto cells = split(lines[row], ',');
    if (cells.size() != columns.size()) {
      throw DmlError(ErrorCode::kNonNumericCell,
                     fmt::format("line {} has {} cells, header has {}", row + 1, cells.size(), columns.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto value = parse_double(cells[j]);
      if (!value || !std::isfinite(*value)) {
        throw DmlError(ErrorCode::kNonNumericCell, fmt::format("line {}, column '{}': cannot use '{}'", row + 1,
                                                               columns[j].name, trim(cells[j])));
      }
      columns[j].values.push_back(*value);
    }
  }
  return DmlDataset::create(std::move(columns), roles);
}

DmlDataset load_csv(const std::filesystem::path& path, const ColumnRoles& roles) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DmlError(ErrorCode::kIo, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), roles);
}

std::string to_csv(const DmlDataset& ds) {
  const auto& cols = ds.columns();
  std::string out;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (j > 0) out.push_back(',');
    out += cols[j].name;
  }
  out.push_back('\n');
  for (std::size_t i = 0; i < ds.n_obs(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (j > 0) out.push_back(',');
      out += format_double(cols[j].values[i]);
    }
    out.push_back('\n');
  }
  return out;
}

void write_csv(const DmlDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DmlError(ErrorCode::kIo, fmt::format("cannot write '{}'", path.string()));
  out << to_csv(ds);
  if (!out) throw DmlError(ErrorCode::kIo, fmt::format("write to '{}' failed", path.string()));
}

Bytes serialize_dataset(const DmlDataset& ds) {
  const std::string header =
      fmt::format("dmlds 1\nn_obs {}\n{}data\n", ds.n_obs(), schema_text(ds.columns(), ds.roles()));
  Bytes out(header.begin(), header.end());
  out.reserve(header.size() + ds.columns().size() * ds.n_obs() * sizeof(double));
  for (const auto& col : ds.columns()) {
    for (double v : col.values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        out.push_back(static_cast<std::uint8_t>(bits & 0xFF));
        bits >>= 8;
      }
    }
  }
  return out;
}

DmlDataset deserialize_dataset(std::span<const std::uint8_t> bytes) {
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  const auto bad = [](std::string_view what) {
    return DmlError(ErrorCode::kInvalidDataset, fmt::format("corrupt dataset blob: {}", what));
  };
  std::size_t pos = 0;
  const auto next_line = [&]() -> std::string_view {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) throw bad("truncated header");
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  const auto field = [&](std::string_view key) -> std::string_view {
    const auto line = next_line();
    if (line.substr(0, key.size() + 1) != fmt::format("{} ", key)) throw bad(fmt::format("expected '{}'", key));
    return line.substr(key.size() + 1);
  };

  if (next_line() != "dmlds 1") throw bad("unknown format tag");
  const auto n = parse_int(field("n_obs"));
  if (!n || *n < 0) throw bad("n_obs");
  std::vector<Column> columns;
  for (auto name : split(field("columns"), ',')) columns.push_back({std::string(name), {}});
  ColumnRoles roles;
  roles.y_col = std::string(field("y"));
  roles.d_col = std::string(field("d"));
  for (auto x : split(field("x"), ',')) roles.x_cols.emplace_back(x);
  if (next_line() != "data") throw bad("missing data marker");

  const auto n_obs = static_cast<std::size_t>(*n);
  if (bytes.size() - pos != columns.size() * n_obs * sizeof(double)) throw bad("payload size");
  for (auto& col : columns) {
    col.values.resize(n_obs);
    for (std::size_t i = 0; i < n_obs; ++i) {
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) bits = (bits << 8) | bytes[pos + static_cast<std::size_t>(b)];
      col.values[i] = std::bit_cast<double>(bits);
      pos += 8;
    }
  }
  return DmlDataset::create(std::move(columns), std::move(roles));
}

std::string schema_digest(const DmlDataset& ds) { return sha256_hex(schema_text(ds.columns(), ds.roles())); }

ObjectStore::ObjectStore(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec || !std::filesystem::is_directory(root_)) {
    throw DmlError(ErrorCode::kStoreUnavailable, fmt::format("cannot use '{}' as store root", root_.string()));
  }
}

std::filesystem::path ObjectStore::path_for(std::string_view key) const { return root_ / std::string(key); }

std::string ObjectStore::put(std::span<const std::uint8_t> bytes) const {
  std::string key = sha256_hex(bytes);
  const auto target = path_for(key);
  if (std::filesystem::exists(target)) return key;

  static std::atomic<std::uint64_t> counter{0};
  const auto tmp = root_ / fmt::format(".{}.tmp.{}.{}", key, std::hash<std::thread::id>{}(std::this_thread::get_id()),
                                       counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DmlError(ErrorCode::kStoreUnavailable, fmt::format("cannot write under '{}'", root_.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DmlError(ErrorCode::kStoreUnavailable, fmt::format("write failed under '{}'", root_.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DmlError(ErrorCode::kStoreUnavailable, fmt::format("cannot publish blob {}", key));
  }
  return key;
}

bool ObjectStore::contains(std::string_view key) const {
  return is_sha256_hex(key) && std::filesystem::is_regular_file(path_for(key));
}

Bytes ObjectStore::get(std::string_view key) const {
  if (!contains(key)) throw DmlError(ErrorCode::kUnknownKey, fmt::format("no blob with key '{}'", key));
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) throw DmlError(ErrorCode::kUnknownKey, fmt::format("cannot read blob '{}'", key));
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

DatasetRef store_dataset(const DmlDataset& ds, const ObjectStore& store) {
  const Bytes bytes = serialize_dataset(ds);
  return DatasetRef{store.put(bytes), schema_digest(ds)};
}

DmlDataset fetch_dataset(const DatasetRef& ref, const ObjectStore& store) {
  const Bytes bytes = store.get(ref.store_key);
  if (sha256_hex(bytes) != ref.store_key) {
    throw DmlError(ErrorCode::kUnknownKey, fmt::format("blob '{}' failed integrity check", ref.store_key));
  }
  DmlDataset ds = deserialize_dataset(bytes);
  if (schema_digest(ds) != ref.schema_digest) {
    throw DmlError(ErrorCode::kSchemaMismatch, fmt::format("schema digest mismatch for '{}'", ref.store_key));
  }
  return ds;
}

}  // namespace dmlsl
