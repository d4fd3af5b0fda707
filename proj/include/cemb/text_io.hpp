// Text matrix format shared by embeddings, model files and checkpoints.
//
//   <rows> <cols>
//   <label> v1 ... v_cols          (one line per row, values %.17g)
//
// Model files wrap one or more such blocks:
//
//   #cemb <kind>
//   #meta <key> <value>            (zero or more)
//   #matrix <name>
//   <rows> <cols>
//   ...

#ifndef CEMB_TEXT_IO_HPP
#define CEMB_TEXT_IO_HPP

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace cemb {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v))
    throw InputError(where + ": bad number '" + s + "'");
  return v;
}

inline std::size_t parse_count(const std::string& s, const std::string& where) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw InputError(where + ": bad count '" + s + "'");
  return static_cast<std::size_t>(std::stoull(s));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary sibling and renames, so a failed run never
/// leaves a partial file at `path`.
inline void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write file: " + path);
    out << contents;
    if (!out) throw InputError("write failed: " + path);
  }
  std::filesystem::rename(tmp, path);
}

struct LabeledMatrix {
  std::vector<std::string> labels;
  Matrix values;
};

inline void write_matrix_block(std::ostream& out, const LabeledMatrix& m) {
  out << m.values.rows() << ' ' << m.values.cols() << '\n';
  for (std::size_t r = 0; r < m.values.rows(); ++r) {
    out << (r < m.labels.size() ? m.labels[r] : std::to_string(r));
    for (double v : m.values.row(r)) out << ' ' << format_double(v);
    out << '\n';
  }
}

/// Reads one block; the stream is left after its last row. Errors on short,
/// long or malformed rows.
inline LabeledMatrix read_matrix_block(std::istream& in, const std::string& where) {
  std::string line;
  if (!std::getline(in, line)) throw InputError(where + ": missing matrix header");
  const auto header = split_ws(line);
  if (header.size() != 2) throw InputError(where + ": matrix header must be '<rows> <cols>'");
  const std::size_t rows = parse_count(header[0], where);
  const std::size_t cols = parse_count(header[1], where);
  LabeledMatrix m{{}, Matrix(rows, cols)};
  m.labels.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line))
      throw InputError(where + ": truncated matrix, expected " + std::to_string(rows) + " rows, got " +
                       std::to_string(r));
    const auto toks = split_ws(line);
    if (toks.size() != cols + 1)
      throw InputError(where + ": row " + std::to_string(r + 1) + " has " +
                       std::to_string(toks.empty() ? 0 : toks.size() - 1) + " values, expected " +
                       std::to_string(cols));
    m.labels.push_back(toks[0]);
    for (std::size_t c = 0; c < cols; ++c) m.values(r, c) = parse_double(toks[c + 1], where);
  }
  return m;
}

/// A typed container of named matrices plus string metadata.
struct ModelFile {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, LabeledMatrix>> blocks;

  const LabeledMatrix& block(const std::string& name) const {
    for (const auto& [n, b] : blocks)
      if (n == name) return b;
    throw InputError("model file (" + kind + ") has no matrix '" + name + "'");
  }

  bool has_block(const std::string& name) const {
    for (const auto& b : blocks)
      if (b.first == name) return true;
    return false;
  }

  const std::string& meta_value(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw InputError("model file (" + kind + ") has no meta key '" + key + "'");
    return it->second;
  }

  std::string serialize() const {
    std::ostringstream out;
    out << "#cemb " << kind << '\n';
    for (const auto& [k, v] : meta) out << "#meta " << k << ' ' << v << '\n';
    for (const auto& [name, m] : blocks) {
      out << "#matrix " << name << '\n';
      write_matrix_block(out, m);
    }
    return out.str();
  }

  static ModelFile parse(const std::string& text, const std::string& where) {
    std::istringstream in(text);
    std::string line;
    ModelFile f;
    if (!std::getline(in, line) || line.rfind("#cemb ", 0) != 0) throw InputError(where + ": missing '#cemb <kind>' header");
    f.kind = line.substr(6);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line.rfind("#meta ", 0) == 0) {
        const auto rest = line.substr(6);
        const auto sp = rest.find(' ');
        if (sp == std::string::npos) throw InputError(where + ": malformed meta line");
        f.meta[rest.substr(0, sp)] = rest.substr(sp + 1);
      } else if (line.rfind("#matrix ", 0) == 0) {
        const auto name = line.substr(8);
        f.blocks.emplace_back(name, read_matrix_block(in, where + " [" + name + "]"));
      } else {
        throw InputError(where + ": unexpected line '" + line + "'");
      }
    }
    return f;
  }

  static ModelFile load(const std::string& path, const std::string& expected_kind) {
    ModelFile f = parse(read_file(path), path);
    if (f.kind != expected_kind) throw InputError(path + ": expected model kind '" + expected_kind + "', found '" + f.kind + "'");
    return f;
  }
};

inline LabeledMatrix numbered(const Matrix& m) {
  LabeledMatrix out{{}, m};
  for (std::size_t r = 0; r < m.rows(); ++r) out.labels.push_back(std::to_string(r));
  return out;
}

}  // namespace cemb

#endif  // CEMB_TEXT_IO_HPP
