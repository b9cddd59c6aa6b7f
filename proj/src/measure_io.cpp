#include "mkv/measure_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "call_syntax.hpp"
#include "mkv/error.hpp"

namespace mkv {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(detail::trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double number(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) {
    throw Error(Errc::ParseError, "line " + std::to_string(line) + ": not a number: '" + s + "'");
  }
  return v;
}

// Reads lines, dropping '\r' and skipping blank ones.
struct LineReader {
  std::istream& is;
  std::size_t no = 0;

  bool next(std::string& out) {
    while (std::getline(is, out)) {
      ++no;
      if (!out.empty() && out.back() == '\r') out.pop_back();
      if (!detail::trim(out).empty()) return true;
    }
    return false;
  }
};

Measure read_grid(LineReader& in) {
  std::vector<GridAxis> axes;
  std::string line;
  for (;;) {
    if (!in.next(line)) throw Error(Errc::ParseError, "grid file ends inside the axis block");
    const auto cells = split(line);
    if (cells.size() == 1 && cells[0] == "value") break;
    if (cells.size() != 4) {
      throw Error(Errc::ParseError, "line " + std::to_string(in.no) + ": expected axis,min,max,nodes");
    }
    const double idx = number(cells[0], in.no);
    const double nodes = number(cells[3], in.no);
    if (idx != static_cast<double>(axes.size() + 1)) {
      throw Error(Errc::ParseError, "line " + std::to_string(in.no) + ": axes must be numbered 1, 2, ...");
    }
    if (!(nodes >= 2.0) || nodes != static_cast<double>(static_cast<std::size_t>(nodes))) {
      throw Error(Errc::ParseError, "line " + std::to_string(in.no) + ": bad node count");
    }
    axes.push_back(GridAxis{number(cells[1], in.no), number(cells[2], in.no), static_cast<std::size_t>(nodes)});
  }
  if (axes.empty()) throw Error(Errc::ParseError, "grid file without axes");
  std::vector<double> values;
  while (in.next(line)) {
    const auto cells = split(line);
    if (cells.size() != 1) throw Error(Errc::ParseError, "line " + std::to_string(in.no) + ": one value per row");
    values.push_back(number(cells[0], in.no));
  }
  std::size_t expected = 1;
  for (const auto& a : axes) expected *= a.nodes;
  if (values.size() != expected) {
    throw Error(Errc::ParseError, "grid file has " + std::to_string(values.size()) + " values, expected " +
                                      std::to_string(expected));
  }
  return GridDensity(std::move(axes), std::move(values));
}

Measure read_empirical(LineReader& in, const std::vector<std::string>& header) {
  const std::size_t d = header.size() - 1;
  for (std::size_t c = 0; c < d; ++c) {
    if (header[c] != "x" + std::to_string(c + 1)) {
      throw Error(Errc::ParseError, "header must read x1,...,xd,w");
    }
  }
  std::vector<double> coords;
  std::vector<double> weights;
  std::string line;
  while (in.next(line)) {
    const auto cells = split(line);
    if (cells.size() != d + 1) {
      throw Error(Errc::ParseError, "line " + std::to_string(in.no) + ": expected " + std::to_string(d + 1) +
                                        " columns");
    }
    for (std::size_t c = 0; c < d; ++c) coords.push_back(number(cells[c], in.no));
    weights.push_back(number(cells[d], in.no));
  }
  return EmpiricalMeasure(d, std::move(coords), std::move(weights));
}

}  // namespace

void write_measure_csv(std::ostream& os, const Measure& m) {
  if (const auto* g = std::get_if<GridDensity>(&m)) {
    os << "axis,min,max,nodes\n";
    for (std::size_t a = 0; a < g->dim(); ++a) {
      const auto& ax = g->axes()[a];
      os << a + 1 << ',' << fmt(ax.min) << ',' << fmt(ax.max) << ',' << ax.nodes << '\n';
    }
    os << "value\n";
    for (double v : g->values()) os << fmt(v) << '\n';
    return;
  }
  const auto& e = std::get<EmpiricalMeasure>(m);
  for (std::size_t c = 0; c < e.dim(); ++c) os << 'x' << c + 1 << ',';
  os << "w\n";
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (double x : e.point(i)) os << fmt(x) << ',';
    os << fmt(e.weight(i)) << '\n';
  }
}

void write_measure_csv(const std::filesystem::path& path, const Measure& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::InvalidArgument, "cannot write " + path.string());
  write_measure_csv(os, m);
  if (!os) throw Error(Errc::InvalidArgument, "write failed: " + path.string());
}

Measure read_measure_csv(std::istream& is) {
  LineReader in{is};
  std::string line;
  if (!in.next(line)) throw Error(Errc::ParseError, "empty measure file");
  const auto header = split(line);
  if (header == std::vector<std::string>{"axis", "min", "max", "nodes"}) return read_grid(in);
  if (header.size() >= 2 && header.back() == "w") return read_empirical(in, header);
  throw Error(Errc::ParseError, "unrecognised header '" + line + "'");
}

Measure read_measure_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::ParseError, "cannot open " + path.string());
  return read_measure_csv(is);
}

}  // namespace mkv
