#ifndef BHD_UTIL_HPP
#define BHD_UTIL_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bhd {

// Number of workers used by parallel_for when the caller passes 0.
// Defaults to the hardware concurrency; the CLI overrides it via --workers.
void set_default_workers(unsigned n);
unsigned default_workers();

// Runs fn(i) for i in [0, count) on a small thread pool. Work items are
// claimed through an atomic counter; callers that need deterministic output
// write into preallocated slots indexed by i. Exceptions from workers are
// collected and the first one is rethrown after the pool joins.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn,
                  unsigned workers = 0);

// Shortest round-trip decimal representation ('.' decimal point, no locale).
std::string format_double(double x);

// FNV-1a 64-bit, used for config hashes and output checksums.
std::uint64_t fnv1a(const void* data, std::size_t size);
std::uint64_t fnv1a_file(const std::string& path);
std::string hex64(std::uint64_t v);

// Headered CSV writer. All values go through format_double, so output bytes
// are reproducible across runs and locales.
class CsvWriter {
public:
    CsvWriter(std::string path, const std::vector<std::string>& columns);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<double>& values);
    void row_mixed(const std::vector<std::string>& cells);
    void close();
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::string buffer_;
    std::size_t n_cols_;
    bool open_ = true;
    void flush();
};

// Error-free transforms used where probability bookkeeping must stay exact.
struct TwoSum {
    double sum;
    double err;
};
TwoSum two_sum(double a, double b);
TwoSum two_prod(double a, double b);

// Neumaier-compensated sum of a vector.
double accurate_sum(const std::vector<double>& v);

// Simple monotonic stopwatch for manifest stage timings.
double monotonic_seconds();

std::string iso8601_utc_now();

} // namespace bhd

#endif
