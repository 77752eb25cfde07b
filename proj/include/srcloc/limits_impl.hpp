#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace srcloc {

template <class LogZ>
Point lattice_ratio(const LogZ& log_z, double half_width, int resolution, double* edge) {
  const int R = resolution;
  const double step = R > 1 ? 2.0 * half_width / (R - 1) : 0.0;
  std::vector<double> values(static_cast<std::size_t>(R) * R);
  double peak = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < R; ++a)
    for (int b = 0; b < R; ++b) {
      const Point u{-half_width + a * step, -half_width + b * step};
      const double v = log_z(u);
      values[static_cast<std::size_t>(a) * R + b] = v;
      peak = std::max(peak, v);
    }
  double mass = 0.0, mx = 0.0, my = 0.0, boundary = 0.0;
  for (int a = 0; a < R; ++a)
    for (int b = 0; b < R; ++b) {
      const double z = std::exp(values[static_cast<std::size_t>(a) * R + b] - peak);
      mass += z;
      mx += z * (-half_width + a * step);
      my += z * (-half_width + b * step);
      if (a == 0 || b == 0 || a == R - 1 || b == R - 1) boundary += z;
    }
  if (edge) *edge = boundary / mass;
  return {mx / mass, my / mass};
}

template <class LogZ>
ThetaVector lattice_ratio_4d(const LogZ& log_z1, const LogZ& log_z2, const std::array<double, 2>& half_width,
                             int resolution) {
  const int R = resolution;
  std::array<std::vector<Point>, 2> nodes;
  std::array<std::vector<double>, 2> logs;
  for (std::size_t i = 0; i < 2; ++i) {
    const double step = R > 1 ? 2.0 * half_width[i] / (R - 1) : 0.0;
    for (int a = 0; a < R; ++a)
      for (int b = 0; b < R; ++b) {
        const Point u{-half_width[i] + a * step, -half_width[i] + b * step};
        nodes[i].push_back(u);
        logs[i].push_back(i == 0 ? log_z1(u) : log_z2(u));
      }
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (double l1 : logs[0])
    for (double l2 : logs[1]) peak = std::max(peak, l1 + l2);
  double mass = 0.0;
  std::array<double, 4> first{0.0, 0.0, 0.0, 0.0};
  for (std::size_t p = 0; p < nodes[0].size(); ++p)
    for (std::size_t q = 0; q < nodes[1].size(); ++q) {
      const double z = std::exp(logs[0][p] + logs[1][q] - peak);
      mass += z;
      first[0] += z * nodes[0][p].x;
      first[1] += z * nodes[0][p].y;
      first[2] += z * nodes[1][q].x;
      first[3] += z * nodes[1][q].y;
    }
  return ThetaVector(first[0] / mass, first[1] / mass, first[2] / mass, first[3] / mass);
}

}  // namespace srcloc
