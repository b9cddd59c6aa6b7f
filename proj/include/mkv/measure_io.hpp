#pragma once

#include <filesystem>
#include <iosfwd>

#include "mkv/measure.hpp"

namespace mkv {

/// CSV layouts.
///
/// Empirical, one atom per row:
///   x1,...,xd,w
///   0.5,0.25
///
/// Grid, an axis block followed by the values in row-major order (last axis
/// fastest):
///   axis,min,max,nodes
///   1,-4,6,201
///   value
///   0
///   ...
///
/// Numbers are written with 17 significant digits, so a written measure
/// re-reads exactly.
void write_measure_csv(std::ostream& os, const Measure& m);
void write_measure_csv(const std::filesystem::path& path, const Measure& m);

/// Throws ParseError on malformed input, and the measure constructors'
/// errors (NegativeWeight, EmptySupport, ...) on invalid content.
Measure read_measure_csv(std::istream& is);
Measure read_measure_csv(const std::filesystem::path& path);

}  // namespace mkv
