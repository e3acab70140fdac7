#include "mirror_opt/trace.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

namespace {
constexpr const char* kHeader = "k,t_k,f,grad_norm,consistency_error,wall_ns";
}

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

double Trace::final_value() const {
  if (rows.empty()) throw Error("trace has no rows");
  return rows.back().f;
}

std::vector<double> Trace::values() const {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.f);
  return v;
}

void Trace::write_csv(std::ostream& out) const {
  out << kHeader << '\n';
  for (const auto& r : rows) {
    out << r.k << ',' << format_real(r.t) << ',' << format_real(r.f) << ',' << format_real(r.grad_norm) << ','
        << format_real(r.consistency_error) << ',' << r.wall_ns << '\n';
  }
}

void Trace::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  write_csv(out);
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

Trace Trace::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("trace CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw IoError(fmt::format("unexpected trace header '{}'", line));
  Trace trace;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw IoError(fmt::format("trace row {}: expected 6 fields, got {}", row, cells.size()));
    try {
      TraceRow r;
      r.k = std::stol(cells[0]);
      r.t = std::stod(cells[1]);
      r.f = std::stod(cells[2]);
      r.grad_norm = std::stod(cells[3]);
      r.consistency_error = std::stod(cells[4]);
      r.wall_ns = std::stoll(cells[5]);
      trace.rows.push_back(r);
    } catch (const std::exception&) {
      throw IoError(fmt::format("trace row {}: malformed number", row));
    }
  }
  return trace;
}

Trace Trace::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return read_csv(in);
}

}  // namespace mirror_opt
