#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "srcloc/geometry.hpp"
#include "srcloc/signal.hpp"

namespace srcloc {

struct DetectorRecord {
  std::size_t k = 0;
  std::vector<double> events;  // strictly increasing, inside [0, T]
  double n = 1.0;
};

struct ObservationSet {
  std::vector<DetectorRecord> records;
  IntensityModel model;
  DetectorArray array;
  std::uint64_t seed = 0;

  std::size_t event_count() const;
  /// Throws DataError if records do not match the model (count, order, n, range).
  void validate() const;
};

/// Draws one record per detector by thinning a homogeneous process whose rate
/// is the detector's peak intensity. Detector k uses the substream
/// derive_seed(seed, {k}); results do not depend on evaluation order. Throws
/// ConfigError if a front does not end before the horizon.
ObservationSet simulate(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta,
                        std::uint64_t seed);

DetectorRecord simulate_detector(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta,
                                 std::size_t k, std::uint64_t seed);

/// X_k(t): number of events <= t.
std::size_t count_path(const DetectorRecord& record, double t);

/// One JSON object per line: {"detector":k,"n":n,"events":[...]}.
void write_jsonl(std::ostream& out, const std::vector<DetectorRecord>& records);
void write_jsonl(const std::string& path, const std::vector<DetectorRecord>& records);

/// Parses records written by write_jsonl. Throws DataError with a 1-based line
/// number on malformed input or an empty stream.
std::vector<DetectorRecord> read_jsonl(std::istream& in);
std::vector<DetectorRecord> read_jsonl(const std::string& path);

/// Shortest round-trip text for a double.
std::string format_double(double x);

}  // namespace srcloc
