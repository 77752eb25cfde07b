#include "srcloc/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "srcloc/errors.hpp"
#include "srcloc/rng.hpp"

namespace srcloc {

std::size_t ObservationSet::event_count() const {
  std::size_t total = 0;
  for (const auto& r : records) total += r.events.size();
  return total;
}

void ObservationSet::validate() const {
  if (records.size() != array.size())
    throw DataError("expected " + std::to_string(array.size()) + " detector records, found " +
                    std::to_string(records.size()));
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    if (r.k != k) throw DataError("record " + std::to_string(k) + " is for detector " + std::to_string(r.k));
    if (r.n != model.n) throw DataError("record " + std::to_string(k) + " has a scale factor different from the model");
    for (std::size_t j = 0; j < r.events.size(); ++j) {
      const double t = r.events[j];
      if (!(t >= 0.0 && t <= model.horizon))
        throw DataError("detector " + std::to_string(k) + ": event time outside [0, T]");
      if (j > 0 && !(t > r.events[j - 1]))
        throw DataError("detector " + std::to_string(k) + ": event times are not strictly increasing");
    }
  }
}

DetectorRecord simulate_detector(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta,
                                 std::size_t k, std::uint64_t seed) {
  const std::array<double, 2> tau{arrival_time(array, k, theta.source(0)), arrival_time(array, k, theta.source(1))};
  const double majorant = model.n * model.peak_rate(k);
  Engine rng(derive_seed(seed, {k}));
  DetectorRecord rec;
  rec.k = k;
  rec.n = model.n;
  rec.events.reserve(static_cast<std::size_t>(majorant * model.horizon * 1.1) + 16);
  double t = 0.0;
  for (;;) {
    t += -std::log1p(-uniform01(rng)) / majorant;
    if (t > model.horizon) break;
    const double accept = uniform01(rng) * majorant;
    if (accept < model.n * unit_intensity(model, k, tau, t)) {
      if (rec.events.empty() || t > rec.events.back()) rec.events.push_back(t);
    }
  }
  return rec;
}

ObservationSet simulate(const IntensityModel& model, const DetectorArray& array, const ThetaVector& theta,
                        std::uint64_t seed) {
  model.validate(array.size());
  for (std::size_t k = 0; k < array.size(); ++k)
    for (std::size_t i = 0; i < 2; ++i) {
      const double end = arrival_time(array, k, theta.source(i)) + model.front.ramp_width();
      if (!(end < model.horizon))
        throw ConfigError("detector " + std::to_string(k) + ": source " + std::to_string(i + 1) +
                          " front ends at t = " + format_double(end) + ", not below the horizon T = " +
                          format_double(model.horizon));
    }
  ObservationSet obs;
  obs.model = model;
  obs.array = array;
  obs.seed = seed;
  obs.records.reserve(array.size());
  for (std::size_t k = 0; k < array.size(); ++k) obs.records.push_back(simulate_detector(model, array, theta, k, seed));
  return obs;
}

std::size_t count_path(const DetectorRecord& record, double t) {
  return static_cast<std::size_t>(std::upper_bound(record.events.begin(), record.events.end(), t) -
                                  record.events.begin());
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void write_jsonl(std::ostream& out, const std::vector<DetectorRecord>& records) {
  std::string line;
  for (const auto& r : records) {
    line.clear();
    line += "{\"detector\":" + std::to_string(r.k) + ",\"n\":" + format_double(r.n) + ",\"events\":[";
    char buf[64];
    for (std::size_t j = 0; j < r.events.size(); ++j) {
      if (j) line += ',';
      const auto res = std::to_chars(buf, buf + sizeof(buf), r.events[j]);
      line.append(buf, res.ptr);
    }
    line += "]}\n";
    out << line;
  }
}

void write_jsonl(const std::string& path, const std::vector<DetectorRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_jsonl(out, records);
  if (!out) throw Error("failed writing " + path);
}

std::vector<DetectorRecord> read_jsonl(std::istream& in) {
  std::vector<DetectorRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    try {
      DetectorRecord r;
      const auto k = j.at("detector").get<long long>();
      if (k < 0) throw DataError("negative detector index", line_no);
      r.k = static_cast<std::size_t>(k);
      r.n = j.at("n").get<double>();
      r.events = j.at("events").get<std::vector<double>>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("bad record: ") + e.what(), line_no);
    }
  }
  if (records.empty()) throw DataError("no detector records found");
  return records;
}

std::vector<DetectorRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_jsonl(in);
}

}  // namespace srcloc
