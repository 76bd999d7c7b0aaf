#pragma once

#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <unistd.h>

#include <json.hpp>

#include "random.hpp"
#include "system.hpp"
#include "types.hpp"

namespace dtmor {

namespace fs = std::filesystem;

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& tok, const std::string& where) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && tok[0] == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw IoError(where + ": cannot parse number '" + tok + "'");
  return v;
}

inline long parse_long(const std::string& tok, const std::string& where) {
  long v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw IoError(where + ": cannot parse integer '" + tok + "'");
  return v;
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Write a sparse matrix in Matrix Market coordinate format.
inline std::string mtx_string(const SpMat& S) {
  std::ostringstream out;
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << S.rows() << ' ' << S.cols() << ' ' << S.nonZeros() << '\n';
  for (Index j = 0; j < S.outerSize(); ++j)
    for (SpMat::InnerIterator it(S, j); it; ++it)
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << detail::format_double(it.value()) << '\n';
  return out.str();
}

/// Write a dense matrix in Matrix Market array (column-major) format.
inline std::string mtx_string(const Mat& X) {
  std::ostringstream out;
  out << "%%MatrixMarket matrix array real general\n";
  out << X.rows() << ' ' << X.cols() << '\n';
  for (Index j = 0; j < X.cols(); ++j)
    for (Index i = 0; i < X.rows(); ++i) out << detail::format_double(X(i, j)) << '\n';
  return out.str();
}

inline void write_mtx(const fs::path& path, const SpMat& S) { detail::write_text_file(path, mtx_string(S)); }
inline void write_mtx(const fs::path& path, const Mat& X) { detail::write_text_file(path, mtx_string(X)); }

/// Parsed Matrix Market content: array files stay dense, coordinate files
/// stay sparse (explicit zeros are kept).
struct MtxData {
  bool is_array = false;
  Mat dense;
  SpMat sparse;

  Mat to_dense() const { return is_array ? dense : Mat(sparse); }
  SpMat to_sparse_matrix() const { return is_array ? to_sparse(dense) : sparse; }
};

/// Parse Matrix Market text (coordinate or array; real or integer; general
/// or symmetric).
inline MtxData parse_mtx(const std::string& text, const std::string& where = "matrix") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError(where + ": empty Matrix Market file");
  std::istringstream hdr(line);
  std::string banner, object, format, field, symmetry;
  hdr >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket" || detail::lower(object) != "matrix")
    throw IoError(where + ": malformed Matrix Market header");
  format = detail::lower(format);
  field = detail::lower(field);
  symmetry = detail::lower(symmetry);
  if (format != "coordinate" && format != "array") throw IoError(where + ": unsupported format " + format);
  if (field != "real" && field != "integer" && field != "double")
    throw IoError(where + ": unsupported field " + field);
  if (symmetry != "general" && symmetry != "symmetric")
    throw IoError(where + ": unsupported symmetry " + symmetry);
  const bool sym = symmetry == "symmetric";

  // Skip comments and blank lines up to the size line.
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    break;
  }
  std::istringstream size_line(line);
  std::vector<std::string> sz;
  for (std::string tok; size_line >> tok;) sz.push_back(tok);
  std::vector<std::string> tokens;
  for (std::string tok; in >> tok;) tokens.push_back(tok);

  if (format == "coordinate") {
    if (sz.size() != 3) throw IoError(where + ": malformed size line");
    const long rows = detail::parse_long(sz[0], where), cols = detail::parse_long(sz[1], where),
               nnz = detail::parse_long(sz[2], where);
    if (rows < 0 || cols < 0 || nnz < 0) throw IoError(where + ": negative size");
    if (static_cast<long>(tokens.size()) != 3 * nnz) throw IoError(where + ": entry count does not match header");
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(sym ? 2 * nnz : nnz));
    for (long e = 0; e < nnz; ++e) {
      long i = detail::parse_long(tokens[3 * e], where) - 1;
      long j = detail::parse_long(tokens[3 * e + 1], where) - 1;
      double v = detail::parse_double(tokens[3 * e + 2], where);
      if (i < 0 || i >= rows || j < 0 || j >= cols) throw IoError(where + ": index out of range");
      t.emplace_back(i, j, v);
      if (sym && i != j) t.emplace_back(j, i, v);
    }
    MtxData out;
    out.sparse.resize(rows, cols);
    out.sparse.setFromTriplets(t.begin(), t.end());
    out.sparse.makeCompressed();
    return out;
  }

  if (sz.size() != 2) throw IoError(where + ": malformed size line");
  const long rows = detail::parse_long(sz[0], where), cols = detail::parse_long(sz[1], where);
  if (rows < 0 || cols < 0) throw IoError(where + ": negative size");
  const long expected = sym ? rows * (rows + 1) / 2 : rows * cols;
  if (static_cast<long>(tokens.size()) != expected) throw IoError(where + ": entry count does not match header");
  Mat X = Mat::Zero(rows, cols);
  long e = 0;
  for (long j = 0; j < cols; ++j)
    for (long i = sym ? j : 0; i < rows; ++i) {
      X(i, j) = detail::parse_double(tokens[e++], where);
      if (sym) X(j, i) = X(i, j);
    }
  MtxData out;
  out.is_array = true;
  out.dense = std::move(X);
  return out;
}

inline SpMat read_mtx_sparse(const fs::path& path) {
  return parse_mtx(detail::read_text_file(path), path.string()).to_sparse_matrix();
}

inline Mat read_mtx_dense(const fs::path& path) {
  return parse_mtx(detail::read_text_file(path), path.string()).to_dense();
}

/// Write `contents` into a private sibling directory, then atomically move it
/// to `dir`, replacing any previous directory there.
template <typename Fill>
void write_directory_atomically(const fs::path& dir, Fill&& contents) {
  static std::atomic<unsigned> counter{0};
  fs::path target = fs::absolute(dir);
  std::error_code ec;
  if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
  if (ec) throw IoError("cannot create " + target.parent_path().string() + ": " + ec.message());
  const std::string tag = std::to_string(::getpid()) + "-" + std::to_string(counter++);
  fs::path tmp = target;
  tmp += ".tmp-" + tag;
  fs::remove_all(tmp, ec);
  if (!fs::create_directory(tmp, ec) || ec) throw IoError("cannot create " + tmp.string());
  try {
    contents(tmp);
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
  fs::path old = target;
  old += ".old-" + tag;
  bool had_old = fs::exists(target);
  if (had_old) {
    fs::rename(target, old, ec);
    if (ec) throw IoError("cannot replace " + target.string() + ": " + ec.message());
  }
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot move output into " + target.string() + ": " + ec.message());
  if (had_old) fs::remove_all(old, ec);
}

/// Write the system files (A.mtx, B.mtx, C.mtx, optional M.mtx, manifest.json)
/// into an existing directory.
inline void write_system_files(const DiscreteLTISystem& sys, const fs::path& dir,
                               const nlohmann::json& extra = nlohmann::json::object()) {
  write_mtx(dir / "A.mtx", sys.A());
  write_mtx(dir / "B.mtx", sys.B());
  write_mtx(dir / "C.mtx", sys.C());
  if (sys.M()) write_mtx(dir / "M.mtx", *sys.M());
  nlohmann::json man = {{"n", sys.n()},          {"m", sys.m()},
                        {"p", sys.p()},          {"kind", sys.kind},
                        {"seed", sys.seed},      {"generator-version", Rng::version},
                        {"has-mass", sys.has_mass()}};
  for (auto it = extra.begin(); it != extra.end(); ++it) man[it.key()] = it.value();
  detail::write_text_file(dir / "manifest.json", man.dump(2) + "\n");
}

/// Write a system directory atomically.
inline void write_system(const DiscreteLTISystem& sys, const fs::path& dir,
                         const nlohmann::json& extra = nlohmann::json::object()) {
  write_directory_atomically(dir, [&](const fs::path& tmp) { write_system_files(sys, tmp, extra); });
}

inline DiscreteLTISystem read_system(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a system directory: " + dir.string());
  nlohmann::json man;
  try {
    man = nlohmann::json::parse(detail::read_text_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  auto field = [&](const char* key) -> long {
    if (!man.contains(key) || !man[key].is_number_integer())
      throw IoError(std::string("manifest lacks integer field '") + key + "'");
    return man[key].get<long>();
  };
  const long n = field("n"), m = field("m"), p = field("p");
  SpMat A = read_mtx_sparse(dir / "A.mtx");
  Mat B = read_mtx_dense(dir / "B.mtx");
  Mat C = read_mtx_dense(dir / "C.mtx");
  std::optional<SpMat> M;
  if (fs::exists(dir / "M.mtx")) M = read_mtx_sparse(dir / "M.mtx");
  if (A.rows() != n || A.cols() != n) throw DimensionError("manifest n disagrees with A.mtx");
  if (B.rows() != n || B.cols() != m) throw DimensionError("manifest n/m disagrees with B.mtx");
  if (C.rows() != p || C.cols() != n) throw DimensionError("manifest n/p disagrees with C.mtx");
  if (M && (M->rows() != n || M->cols() != n)) throw DimensionError("manifest n disagrees with M.mtx");
  DiscreteLTISystem sys(std::move(A), std::move(B), std::move(C), std::move(M));
  if (man.contains("kind") && man["kind"].is_string()) sys.kind = man["kind"].get<std::string>();
  if (man.contains("seed") && man["seed"].is_number_unsigned()) sys.seed = man["seed"].get<std::uint64_t>();
  else if (man.contains("seed") && man["seed"].is_number_integer()) sys.seed = static_cast<std::uint64_t>(man["seed"].get<long>());
  return sys;
}

}  // namespace dtmor
