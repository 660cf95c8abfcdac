#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace macroptim::toml {

// Parser for the TOML subset the run-config schema uses:
//   * [table] and [[array-of-tables]] headers (dotted header names allowed)
//   * key = value with bare or quoted keys
//   * values: basic strings, integers, floats, booleans, flat arrays
//   * '#' comments and blank lines
// Dates, inline tables, multi-line strings and dotted keys on the left-hand
// side of assignments are out of scope and rejected with a line number.

class Value;
using Array = std::vector<Value>;
using Table = std::map<std::string, Value>;

class Value {
  public:
    using Storage = std::variant<std::string, std::int64_t, double, bool, Array, Table,
                                 std::vector<Table>>;

    Value() : storage_(std::string()) {}
    explicit Value(Storage s) : storage_(std::move(s)) {}

    bool is_string() const { return std::holds_alternative<std::string>(storage_); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(storage_); }
    bool is_float() const { return std::holds_alternative<double>(storage_); }
    bool is_bool() const { return std::holds_alternative<bool>(storage_); }
    bool is_array() const { return std::holds_alternative<Array>(storage_); }
    bool is_table() const { return std::holds_alternative<Table>(storage_); }
    bool is_table_array() const { return std::holds_alternative<std::vector<Table>>(storage_); }

    const std::string &as_string() const;
    std::int64_t as_int() const;
    double as_number() const; // accepts int or float
    bool as_bool() const;
    const Array &as_array() const;
    const Table &as_table() const;
    Table &as_table();
    const std::vector<Table> &as_table_array() const;
    std::vector<Table> &as_table_array();

    Storage storage_;
};

Table parse(const std::string &text);
Table parse_file(const std::string &path);

// Lookup helpers with schema-error messages. `path` is dot-separated.
const Value *find(const Table &root, const std::string &path);
std::string get_string(const Table &root, const std::string &path, const std::string &fallback);
double get_number(const Table &root, const std::string &path, double fallback);
std::int64_t get_int(const Table &root, const std::string &path, std::int64_t fallback);
bool get_bool(const Table &root, const std::string &path, bool fallback);
bool has(const Table &root, const std::string &path);

// Sets a scalar at a dot-separated path, creating intermediate tables.
void set_scalar(Table &root, const std::string &path, const Value &value);

} // namespace macroptim::toml
