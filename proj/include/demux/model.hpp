#pragma once

// Shared domain types for the demultiplexer simulator: detection records,
// per-pulse emission events, the counter-based random stream, and the
// execution-policy switch used by every kernel that has a serial reference.

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace demux {

/// Raised for invalid parameters or configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed or unusable input data (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Channel ids used throughout. Demux outputs are 1..N.
inline constexpr std::uint32_t kMonitorChannel = 0;
inline constexpr std::uint32_t kBenchChannelA = 100;
inline constexpr std::uint32_t kBenchChannelB = 101;

struct TimeTag {
  std::uint32_t channel = 0;
  std::uint64_t timestamp_ps = 0;

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

/// One emitted photon inside a laser time bin.
struct Photon {
  double offset_ps = 0.0;   // emission delay after the pulse, < pulse separation
  std::uint64_t label = 0;  // equal labels are mutually indistinguishable
};

/// Content of one occupied laser time bin (n_photons is 1 or 2; empty bins
/// are not materialized).
struct PhotonEvent {
  std::int64_t bin_index = 0;
  int n_photons = 0;
  std::array<Photon, 2> photons{};

  [[nodiscard]] double offset_ps() const { return photons[0].offset_ps; }
  [[nodiscard]] std::uint64_t label() const { return photons[0].label; }
};

/// Counter-based generator: draw i of (seed, substream) is a pure function of
/// the triple, so any shard of work can rebuild its stream without shared state.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t substream);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  bool bernoulli(double p);
  double exponential(double mean);

  /// Independent stream for work unit `index`, derived from this stream's
  /// (seed, substream) key and not from its current position.
  [[nodiscard]] RandomStream child(std::uint64_t index) const;

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::uint64_t substream() const { return substream_; }
  [[nodiscard]] std::uint64_t position() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t substream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

RandomStream make_stream(std::uint64_t seed, std::uint64_t substream);

/// Substream namespaces so independent Monte Carlo units never share draws.
enum class StreamDomain : std::uint64_t {
  emission = 1,
  routing = 2,
  hbt = 3,
  hom = 4,
  bench_emission = 5,
  test = 15,
};

constexpr std::uint64_t substream_id(StreamDomain domain, std::uint64_t index) {
  return (static_cast<std::uint64_t>(domain) << 56) | (index & ((std::uint64_t{1} << 56) - 1));
}

/// Sorts by timestamp, ties broken by channel id. Length is preserved.
std::vector<TimeTag> sort_and_merge(std::vector<TimeTag> tags);
std::vector<TimeTag> sort_and_merge(std::span<const std::vector<TimeTag>> streams);

/// Selects the reference (serial) or OpenMP path of a kernel. Both paths
/// produce identical results.
enum class Exec { serial, parallel };

/// Sets the OpenMP worker count; n <= 0 restores the runtime default.
void set_threads(int n);
int max_threads();

/// Converts nanoseconds to integer picoseconds, rounding to nearest.
std::int64_t ns_to_ps(double ns);

}  // namespace demux
