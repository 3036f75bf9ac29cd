#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nvdnp/dnp.hpp"
#include "nvdnp/signal.hpp"
#include "nvdnp/spectra.hpp"

namespace nvdnp {

// Malformed on-disk data; carries the 1-based row that failed.
class CsvError : public std::runtime_error {
  public:
    CsvError(const std::string& msg, std::size_t row_in = 0)
        : std::runtime_error(msg), row(row_in) {}
    std::size_t row;
};

// Shortest round-trip decimal form, locale independent.
std::string format_double(double v);
double parse_double(std::string_view s);  // throws CsvError on trailing garbage

// `# key = value` lines preceding the column header.
struct CsvMetadata {
    std::vector<std::pair<std::string, std::string>> entries;

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value) { set(key, format_double(value)); }
    const std::string* find(const std::string& key) const;
    double get_double(const std::string& key) const;  // throws CsvError if absent
};

void write_spectrum_csv(const std::string& path, const SpectrumGrid& grid,
                        const CsvMetadata& meta = {});
SpectrumGrid read_spectrum_csv(const std::string& path, CsvMetadata* meta = nullptr);

void write_dnp_csv(const std::string& path, const DnpSpectrum& spectrum,
                   const CsvMetadata& meta = {});
DnpSpectrum read_dnp_csv(const std::string& path, CsvMetadata* meta = nullptr);

void write_buildup_csv(const std::string& path, const BuildupCurve& curve,
                       const CsvMetadata& meta = {});
BuildupCurve read_buildup_csv(const std::string& path, CsvMetadata* meta = nullptr);

// Columns (time_s, real, imag); dwell and start time travel in the metadata.
void write_fid_csv(const std::string& path, const FidRecord& fid, const CsvMetadata& meta = {});
FidRecord read_fid_csv(const std::string& path, CsvMetadata* meta = nullptr);

// Columns (time_s, value); used for echo envelopes and small-flip series.
void write_series_csv(const std::string& path, const std::vector<double>& times_s,
                      const std::vector<double>& values, const CsvMetadata& meta = {});
void read_series_csv(const std::string& path, std::vector<double>& times_s,
                     std::vector<double>& values, CsvMetadata* meta = nullptr);

// A dataset store is a directory of FID CSVs plus a manifest.json whose
// "blocks" array fixes the block order.
DatasetStore load_dataset_store(const std::string& dir);
void save_dataset_store(const std::string& dir, const DatasetStore& store);

}  // namespace nvdnp
