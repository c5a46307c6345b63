#ifndef MASKED_CONSENSUS_TRAJECTORY_HPP
#define MASKED_CONSENSUS_TRAJECTORY_HPP

#include <charconv>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mc {

// "prefix1", ..., "prefixn".
inline std::vector<std::string> indexed_names(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Round-trip text form of a double: 17 significant digits.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

// Uniformly sampled, named time series. Row k sits at t0 + k * sample_dt.
class Trajectory {
 public:
  Trajectory(double t0, double sample_dt, std::vector<std::string> names)
      : t0_(t0), sample_dt_(sample_dt), names_(std::move(names)), columns_(names_.size()) {
    if (!(sample_dt > 0.0)) throw std::invalid_argument("trajectory: sample spacing must be > 0");
    for (std::size_t c = 0; c < names_.size(); ++c) {
      if (!index_.emplace(names_[c], c).second) {
        throw std::invalid_argument("trajectory: duplicate series name " + names_[c]);
      }
    }
  }

  double t0() const { return t0_; }
  double sample_dt() const { return sample_dt_; }
  double time(std::size_t k) const { return t0_ + static_cast<double>(k) * sample_dt_; }
  std::size_t rows() const { return columns_.empty() ? 0 : columns_.front().size(); }
  const std::vector<std::string>& names() const { return names_; }

  bool has_series(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<double>& series(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("trajectory: no series named " + name);
    return columns_[it->second];
  }

  void reserve(std::size_t rows) {
    for (auto& c : columns_) c.reserve(rows);
  }

  void append(std::span<const double> row) {
    if (row.size() != columns_.size()) throw std::invalid_argument("trajectory: row width mismatch");
    for (std::size_t c = 0; c < row.size(); ++c) columns_[c].push_back(row[c]);
  }

  // Header "t,<names...>", then every `stride`-th row.
  void write_csv(std::ostream& os, std::size_t stride = 1) const {
    if (stride < 1) throw std::invalid_argument("trajectory: stride must be >= 1");
    os << 't';
    for (const auto& n : names_) os << ',' << n;
    os << '\n';
    for (std::size_t k = 0; k < rows(); k += stride) {
      os << format_double(time(k));
      for (const auto& c : columns_) os << ',' << format_double(c[k]);
      os << '\n';
    }
  }

 private:
  double t0_;
  double sample_dt_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mc

#endif
