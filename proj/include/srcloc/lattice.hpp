#pragma once

#include <cstddef>
#include <vector>

#include "srcloc/geometry.hpp"
#include "srcloc/likelihood.hpp"

namespace srcloc {

struct LatticePoint {
  ThetaVector theta;
  double value = 0.0;
};

/// Cell-centre coordinates of an axis split into `per_axis` cells.
std::vector<double> lattice_axis(const ParameterBox& box, std::size_t coordinate, int per_axis);

/// Ramp windows holding more than this many events are summed over bins.
constexpr std::size_t kLatticeExactEvents = 2048;
/// Bins per ramp width for the binned window sums.
constexpr double kLatticeBinsPerRamp = 256.0;

/// Log-likelihood at every cell centre of a per_axis^4 lattice, in
/// lexicographic order of the cell indices. With constant amplitudes the two
/// sources are scanned separately and combined per detector. Ramp windows
/// with more than kLatticeExactEvents events are summed over a grid of
/// kLatticeBinsPerRamp bins per ramp width, with each event moved to its
/// bin centre; otherwise the values are exact.
std::vector<LatticePoint> lattice_scan(const LogLikelihood& loglik, const ParameterBox& box, int per_axis);

/// Same values computed point by point; the reference for lattice_scan.
std::vector<LatticePoint> lattice_scan_direct(const LogLikelihood& loglik, const ParameterBox& box, int per_axis);

/// The m best points, ordered by decreasing value; ties go to the
/// lexicographically smallest theta.
std::vector<LatticePoint> best_points(const std::vector<LatticePoint>& scan, std::size_t m);

}  // namespace srcloc
