#include "macroptim/toml.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace macroptim::toml {

namespace {

[[noreturn]] void fail(int line, const std::string &msg) {
    throw std::invalid_argument("toml parse error (line " + std::to_string(line) + "): " + msg);
}

struct Cursor {
    const std::string &s;
    std::size_t pos = 0;
    int line;

    bool done() const { return pos >= s.size(); }
    char peek() const { return s[pos]; }
    void skip_ws() {
        while (!done() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    }
};

std::string parse_basic_string(Cursor &c) {
    // opening quote consumed by caller
    std::string out;
    while (!c.done()) {
        char ch = c.s[c.pos++];
        if (ch == '"') return out;
        if (ch == '\\') {
            if (c.done()) fail(c.line, "dangling escape");
            char esc = c.s[c.pos++];
            switch (esc) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case 'r': out.push_back('\r'); break;
            case '"': out.push_back('"'); break;
            case '\\': out.push_back('\\'); break;
            default: fail(c.line, std::string("unsupported escape \\") + esc);
            }
        } else {
            out.push_back(ch);
        }
    }
    fail(c.line, "unterminated string");
}

bool is_bare_key_char(char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-';
}

Value parse_value(Cursor &c);

Value parse_scalar(Cursor &c) {
    c.skip_ws();
    if (c.done()) fail(c.line, "missing value");
    const char ch = c.peek();
    if (ch == '"') {
        ++c.pos;
        return Value(Value::Storage(parse_basic_string(c)));
    }
    std::size_t start = c.pos;
    while (!c.done() && c.peek() != ',' && c.peek() != ']' && c.peek() != '#' &&
           c.peek() != ' ' && c.peek() != '\t') {
        ++c.pos;
    }
    std::string token = c.s.substr(start, c.pos - start);
    if (token.empty()) fail(c.line, "empty value");
    if (token == "true") return Value(Value::Storage(true));
    if (token == "false") return Value(Value::Storage(false));

    const bool looks_float = token.find_first_of(".eE") != std::string::npos ||
                             token == "inf" || token == "-inf" || token == "nan";
    try {
        if (!looks_float) {
            std::size_t used = 0;
            const std::int64_t v = std::stoll(token, &used);
            if (used == token.size()) return Value(Value::Storage(v));
        }
        std::size_t used = 0;
        const double v = std::stod(token, &used);
        if (used != token.size()) fail(c.line, "malformed number '" + token + "'");
        return Value(Value::Storage(v));
    } catch (const std::invalid_argument &) {
        fail(c.line, "malformed value '" + token + "'");
    } catch (const std::out_of_range &) {
        fail(c.line, "number out of range '" + token + "'");
    }
}

Value parse_value(Cursor &c) {
    c.skip_ws();
    if (c.done()) fail(c.line, "missing value");
    if (c.peek() == '[') {
        ++c.pos;
        Array arr;
        c.skip_ws();
        if (!c.done() && c.peek() == ']') {
            ++c.pos;
            return Value(Value::Storage(std::move(arr)));
        }
        while (true) {
            arr.push_back(parse_scalar(c));
            c.skip_ws();
            if (c.done()) fail(c.line, "unterminated array");
            if (c.peek() == ',') {
                ++c.pos;
                c.skip_ws();
                continue;
            }
            if (c.peek() == ']') {
                ++c.pos;
                return Value(Value::Storage(std::move(arr)));
            }
            fail(c.line, "expected ',' or ']' in array");
        }
    }
    return parse_scalar(c);
}

std::string parse_key(Cursor &c) {
    c.skip_ws();
    if (c.done()) fail(c.line, "missing key");
    if (c.peek() == '"') {
        ++c.pos;
        return parse_basic_string(c);
    }
    std::size_t start = c.pos;
    while (!c.done() && is_bare_key_char(c.peek())) ++c.pos;
    if (c.pos == start) fail(c.line, "malformed key");
    return c.s.substr(start, c.pos - start);
}

std::vector<std::string> split_dotted(const std::string &name, int line) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : name) {
        if (ch == '.') {
            if (cur.empty()) fail(line, "empty component in table name");
            parts.push_back(cur);
            cur.clear();
        } else if (is_bare_key_char(ch)) {
            cur.push_back(ch);
        } else {
            fail(line, std::string("unexpected character '") + ch + "' in table name");
        }
    }
    if (cur.empty()) fail(line, "empty component in table name");
    parts.push_back(cur);
    return parts;
}

Table *descend(Table &root, const std::vector<std::string> &parts, int line,
               bool tail_is_array) {
    Table *t = &root;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const bool last = i + 1 == parts.size();
        auto it = t->find(parts[i]);
        if (it == t->end()) {
            if (last && tail_is_array) {
                it = t->emplace(parts[i], Value(Value::Storage(std::vector<Table>{}))).first;
            } else {
                it = t->emplace(parts[i], Value(Value::Storage(Table{}))).first;
            }
        }
        Value &v = it->second;
        if (last && tail_is_array) {
            if (!v.is_table_array()) fail(line, "'" + parts[i] + "' is not an array of tables");
            v.as_table_array().emplace_back();
            return &v.as_table_array().back();
        }
        if (v.is_table_array()) {
            if (v.as_table_array().empty()) fail(line, "empty table array '" + parts[i] + "'");
            t = &v.as_table_array().back();
        } else if (v.is_table()) {
            t = &v.as_table();
        } else {
            fail(line, "'" + parts[i] + "' is not a table");
        }
    }
    return t;
}

} // namespace

const std::string &Value::as_string() const {
    if (!is_string()) throw std::invalid_argument("toml value is not a string");
    return std::get<std::string>(storage_);
}

std::int64_t Value::as_int() const {
    if (is_int()) return std::get<std::int64_t>(storage_);
    throw std::invalid_argument("toml value is not an integer");
}

double Value::as_number() const {
    if (is_int()) return static_cast<double>(std::get<std::int64_t>(storage_));
    if (is_float()) return std::get<double>(storage_);
    throw std::invalid_argument("toml value is not a number");
}

bool Value::as_bool() const {
    if (!is_bool()) throw std::invalid_argument("toml value is not a boolean");
    return std::get<bool>(storage_);
}

const Array &Value::as_array() const {
    if (!is_array()) throw std::invalid_argument("toml value is not an array");
    return std::get<Array>(storage_);
}

const Table &Value::as_table() const {
    if (!is_table()) throw std::invalid_argument("toml value is not a table");
    return std::get<Table>(storage_);
}

Table &Value::as_table() {
    if (!is_table()) throw std::invalid_argument("toml value is not a table");
    return std::get<Table>(storage_);
}

const std::vector<Table> &Value::as_table_array() const {
    if (!is_table_array()) throw std::invalid_argument("toml value is not an array of tables");
    return std::get<std::vector<Table>>(storage_);
}

std::vector<Table> &Value::as_table_array() {
    if (!is_table_array()) throw std::invalid_argument("toml value is not an array of tables");
    return std::get<std::vector<Table>>(storage_);
}

Table parse(const std::string &text) {
    Table root;
    Table *current = &root;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        Cursor c{raw, 0, line_no};
        c.skip_ws();
        if (c.done() || c.peek() == '#') continue;

        if (c.peek() == '[') {
            ++c.pos;
            bool is_array = false;
            if (!c.done() && c.peek() == '[') {
                is_array = true;
                ++c.pos;
            }
            std::size_t close = raw.find(is_array ? "]]" : "]", c.pos);
            if (close == std::string::npos) fail(line_no, "unterminated table header");
            std::string name = raw.substr(c.pos, close - c.pos);
            // strip surrounding whitespace
            while (!name.empty() && (name.front() == ' ' || name.front() == '\t')) name.erase(0, 1);
            while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) name.pop_back();
            if (name.empty()) fail(line_no, "empty table name");
            current = descend(root, split_dotted(name, line_no), line_no, is_array);
            continue;
        }

        const std::string key = parse_key(c);
        c.skip_ws();
        if (c.done() || c.peek() != '=') fail(line_no, "expected '=' after key '" + key + "'");
        ++c.pos;
        Value value = parse_value(c);
        c.skip_ws();
        if (!c.done() && c.peek() != '#') fail(line_no, "trailing characters after value");
        if (current->count(key)) fail(line_no, "duplicate key '" + key + "'");
        current->emplace(key, std::move(value));
    }
    return root;
}

Table parse_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const Value *find(const Table &root, const std::string &path) {
    const Table *t = &root;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string part = path.substr(start, dot == std::string::npos ? dot : dot - start);
        auto it = t->find(part);
        if (it == t->end()) return nullptr;
        if (dot == std::string::npos) return &it->second;
        if (!it->second.is_table()) return nullptr;
        t = &it->second.as_table();
        start = dot + 1;
    }
}

std::string get_string(const Table &root, const std::string &path, const std::string &fallback) {
    const Value *v = find(root, path);
    return v ? v->as_string() : fallback;
}

double get_number(const Table &root, const std::string &path, double fallback) {
    const Value *v = find(root, path);
    return v ? v->as_number() : fallback;
}

std::int64_t get_int(const Table &root, const std::string &path, std::int64_t fallback) {
    const Value *v = find(root, path);
    return v ? v->as_int() : fallback;
}

bool get_bool(const Table &root, const std::string &path, bool fallback) {
    const Value *v = find(root, path);
    return v ? v->as_bool() : fallback;
}

bool has(const Table &root, const std::string &path) { return find(root, path) != nullptr; }

void set_scalar(Table &root, const std::string &path, const Value &value) {
    Table *t = &root;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string part = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (dot == std::string::npos) {
            (*t)[part] = value;
            return;
        }
        auto it = t->find(part);
        if (it == t->end()) it = t->emplace(part, Value(Value::Storage(Table{}))).first;
        t = &it->second.as_table();
        start = dot + 1;
    }
}

} // namespace macroptim::toml
