#include "nvdnp/csv.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace nvdnp {
namespace {

namespace fs = std::filesystem;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

struct ParsedCsv {
    CsvMetadata meta;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

ParsedCsv read_csv_file(const std::string& path, const std::vector<std::string>& expect_header,
                        std::size_t min_columns) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open '" + path + "'");
    ParsedCsv out;
    std::string line;
    std::size_t row = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        if (stripped.front() == '#') {
            const std::string body = trim(std::string_view(stripped).substr(1));
            const auto eq = body.find('=');
            if (eq != std::string::npos)
                out.meta.set(trim(std::string_view(body).substr(0, eq)),
                             trim(std::string_view(body).substr(eq + 1)));
            continue;
        }
        if (!header_seen) {
            out.header = split_fields(stripped);
            if (out.header.size() < expect_header.size())
                throw CsvError("'" + path + "': header has " + std::to_string(out.header.size()) +
                                   " columns, expected at least " +
                                   std::to_string(expect_header.size()),
                               row);
            for (std::size_t i = 0; i < expect_header.size(); ++i)
                if (out.header[i] != expect_header[i])
                    throw CsvError("'" + path + "': header column " + std::to_string(i + 1) +
                                       " is '" + out.header[i] + "', expected '" +
                                       expect_header[i] + "'",
                                   row);
            header_seen = true;
            continue;
        }
        const auto fields = split_fields(stripped);
        if (fields.size() < min_columns)
            throw CsvError("'" + path + "': row " + std::to_string(row) + " has " +
                               std::to_string(fields.size()) + " fields, expected at least " +
                               std::to_string(min_columns),
                           row);
        std::vector<double> vals;
        vals.reserve(fields.size());
        for (const auto& f : fields) {
            try {
                vals.push_back(parse_double(f));
            } catch (const CsvError& e) {
                throw CsvError("'" + path + "': row " + std::to_string(row) + ": " + e.what(), row);
            }
        }
        out.rows.push_back(std::move(vals));
    }
    if (!header_seen) throw CsvError("'" + path + "': no header row found");
    return out;
}

std::ofstream open_for_write(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);  // LF endings everywhere
    if (!out) throw CsvError("cannot write '" + path + "'");
    return out;
}

void write_meta(std::ofstream& out, const CsvMetadata& meta) {
    for (const auto& [k, v] : meta.entries) out << "# " << k << " = " << v << "\n";
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
    if (s.empty()) throw CsvError("empty numeric field");
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw CsvError("malformed number '" + std::string(s) + "'");
    return v;
}

void CsvMetadata::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries)
        if (k == key) {
            v = value;
            return;
        }
    entries.emplace_back(key, value);
}

const std::string* CsvMetadata::find(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return &v;
    return nullptr;
}

double CsvMetadata::get_double(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw CsvError("missing metadata key '" + key + "'");
    return parse_double(*v);
}

void write_spectrum_csv(const std::string& path, const SpectrumGrid& grid,
                        const CsvMetadata& meta) {
    grid.validate();
    auto out = open_for_write(path);
    write_meta(out, meta);
    out << "frequency_GHz,intensity\n";
    for (std::size_t i = 0; i < grid.frequencies_GHz.size(); ++i)
        out << format_double(grid.frequencies_GHz[i]) << ',' << format_double(grid.intensities[i])
            << "\n";
}

SpectrumGrid read_spectrum_csv(const std::string& path, CsvMetadata* meta) {
    const auto csv = read_csv_file(path, {"frequency_GHz", "intensity"}, 2);
    SpectrumGrid grid;
    for (const auto& row : csv.rows) {
        grid.frequencies_GHz.push_back(row[0]);
        grid.intensities.push_back(row[1]);
    }
    grid.validate();
    if (meta) *meta = csv.meta;
    return grid;
}

void write_dnp_csv(const std::string& path, const DnpSpectrum& spectrum, const CsvMetadata& meta) {
    spectrum.validate();
    auto out = open_for_write(path);
    write_meta(out, meta);
    out << "mw_frequency_GHz,signal\n";
    for (std::size_t i = 0; i < spectrum.mw_frequencies_GHz.size(); ++i)
        out << format_double(spectrum.mw_frequencies_GHz[i]) << ','
            << format_double(spectrum.signal[i]) << "\n";
}

DnpSpectrum read_dnp_csv(const std::string& path, CsvMetadata* meta) {
    const auto csv = read_csv_file(path, {"mw_frequency_GHz", "signal"}, 2);
    DnpSpectrum spectrum;
    for (const auto& row : csv.rows) {
        spectrum.mw_frequencies_GHz.push_back(row[0]);
        spectrum.signal.push_back(row[1]);
    }
    spectrum.validate();
    if (meta) *meta = csv.meta;
    return spectrum;
}

void write_buildup_csv(const std::string& path, const BuildupCurve& curve,
                       const CsvMetadata& meta) {
    curve.validate();
    auto out = open_for_write(path);
    write_meta(out, meta);
    const bool with_sigma = !curve.sigma.empty();
    out << (with_sigma ? "time_s,polarization,sigma\n" : "time_s,polarization\n");
    for (std::size_t i = 0; i < curve.times_s.size(); ++i) {
        out << format_double(curve.times_s[i]) << ',' << format_double(curve.polarization[i]);
        if (with_sigma) out << ',' << format_double(curve.sigma[i]);
        out << "\n";
    }
}

BuildupCurve read_buildup_csv(const std::string& path, CsvMetadata* meta) {
    const auto csv = read_csv_file(path, {"time_s", "polarization"}, 2);
    const bool with_sigma = csv.header.size() >= 3 && csv.header[2] == "sigma";
    BuildupCurve curve;
    for (const auto& row : csv.rows) {
        curve.times_s.push_back(row[0]);
        curve.polarization.push_back(row[1]);
        if (with_sigma) {
            if (row.size() < 3)
                throw CsvError("'" + path + "': sigma column missing in a data row");
            curve.sigma.push_back(row[2]);
        }
    }
    curve.validate();
    if (meta) *meta = csv.meta;
    return curve;
}

void write_fid_csv(const std::string& path, const FidRecord& fid, const CsvMetadata& meta) {
    fid.validate();
    CsvMetadata m = meta;
    m.set("dwell_s", fid.dwell_s);
    m.set("start_time_s", fid.start_time_s);
    auto out = open_for_write(path);
    write_meta(out, m);
    out << "time_s,real,imag\n";
    for (std::size_t i = 0; i < fid.samples.size(); ++i)
        out << format_double(fid.time_at(i)) << ',' << format_double(fid.samples[i].real()) << ','
            << format_double(fid.samples[i].imag()) << "\n";
}

FidRecord read_fid_csv(const std::string& path, CsvMetadata* meta) {
    const auto csv = read_csv_file(path, {"time_s", "real", "imag"}, 3);
    FidRecord fid;
    fid.dwell_s = csv.meta.get_double("dwell_s");
    fid.start_time_s = csv.meta.get_double("start_time_s");
    for (const auto& row : csv.rows) fid.samples.emplace_back(row[1], row[2]);
    fid.validate();
    if (meta) *meta = csv.meta;
    return fid;
}

void write_series_csv(const std::string& path, const std::vector<double>& times_s,
                      const std::vector<double>& values, const CsvMetadata& meta) {
    if (times_s.size() != values.size())
        throw std::invalid_argument("write_series_csv: length mismatch");
    auto out = open_for_write(path);
    write_meta(out, meta);
    out << "time_s,value\n";
    for (std::size_t i = 0; i < times_s.size(); ++i)
        out << format_double(times_s[i]) << ',' << format_double(values[i]) << "\n";
}

void read_series_csv(const std::string& path, std::vector<double>& times_s,
                     std::vector<double>& values, CsvMetadata* meta) {
    const auto csv = read_csv_file(path, {"time_s", "value"}, 2);
    times_s.clear();
    values.clear();
    for (const auto& row : csv.rows) {
        times_s.push_back(row[0]);
        values.push_back(row[1]);
    }
    if (meta) *meta = csv.meta;
}

DatasetStore load_dataset_store(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw CsvError("missing manifest: '" + manifest_path.string() + "'");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw CsvError("'" + manifest_path.string() + "': " + e.what());
    }
    if (!manifest.contains("blocks") || !manifest["blocks"].is_array())
        throw CsvError("'" + manifest_path.string() + "': no \"blocks\" array");
    DatasetStore store;
    for (const auto& name : manifest["blocks"]) {
        if (!name.is_string())
            throw CsvError("'" + manifest_path.string() + "': block entries must be file names");
        store.blocks.push_back(read_fid_csv((fs::path(dir) / name.get<std::string>()).string()));
    }
    store.validate();
    return store;
}

void save_dataset_store(const std::string& dir, const DatasetStore& store) {
    store.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    nlohmann::json manifest;
    manifest["blocks"] = nlohmann::json::array();
    for (std::size_t i = 0; i < store.blocks.size(); ++i) {
        const std::string name = "block_" + std::to_string(i) + ".csv";
        write_fid_csv((fs::path(dir) / name).string(), store.blocks[i]);
        manifest["blocks"].push_back(name);
    }
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!out) throw CsvError("cannot write manifest in '" + dir + "'");
    out << manifest.dump(2) << "\n";
}

}  // namespace nvdnp
