#pragma once

// CSV schemas shared by the CLI and the generators, plus small file helpers.
//
//   sites:        site_id, network_id, x, y
//   measurements: site_id, network_id, timestamp, reading, rh, temp, weekend
//   reference:    site_id, timestamp, value
//   grid:         site_id, x, y
//   collocated:   timestamp, x, y [, rh, temp, weekend]
//   truth:        site_id, timestamp, value
//
// Reference devices appear in the sites file with network_id "reference".
// Timepoints are matched by exact timestamp string equality.

#include "mgpf/obs_model.hpp"
#include "mgpf/types.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mgpf::io {

inline constexpr const char* kReferenceNetwork = "reference";

struct CsvTable {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;  // 1-based source line of each row

    // Column index, or -1.
    [[nodiscard]] int column(const std::string& name) const;
    // Column index; throws ValidationError naming the column and file.
    [[nodiscard]] int require(const std::string& name) const;
    [[nodiscard]] double number(std::size_t row, int col) const;
    // Empty field -> NaN, otherwise like number().
    [[nodiscard]] double optional_number(std::size_t row, int col) const;
};

// Parses comma-separated text with a header line. Quoting is not supported;
// fields are trimmed. Throws ValidationError with file and line on a field
// count mismatch or a missing required column.
[[nodiscard]] CsvTable parse_csv(std::istream& in, const std::string& name,
                                 const std::vector<std::string>& required = {});
[[nodiscard]] CsvTable read_csv(const std::string& path, const std::vector<std::string>& required = {});

struct SiteRecord {
    std::string site_id;
    std::string network_id;
    Location loc;
};

struct MeasurementRecord {
    std::string site_id;
    std::string network_id;
    std::string timestamp;
    double reading = 0.0;
    Covariates z;
};

struct ReferenceRecord {
    std::string site_id;
    std::string timestamp;
    double value = 0.0;
};

struct GridRecord {
    std::string site_id;
    Location loc;
};

[[nodiscard]] std::vector<SiteRecord> read_sites(const std::string& path);
[[nodiscard]] std::vector<MeasurementRecord> read_measurements(const std::string& path);
[[nodiscard]] std::vector<ReferenceRecord> read_reference(const std::string& path);
[[nodiscard]] std::vector<GridRecord> read_grid(const std::string& path);
// Missing covariate columns are read as NaN.
[[nodiscard]] obs::CollocatedSeries read_collocated(const std::string& path);

void write_sites(std::ostream& out, const std::vector<SiteRecord>& v);
void write_measurements(std::ostream& out, const std::vector<MeasurementRecord>& v);
void write_reference(std::ostream& out, const std::vector<ReferenceRecord>& v);
void write_grid(std::ostream& out, const std::vector<GridRecord>& v);
void write_collocated(std::ostream& out, const obs::CollocatedSeries& s);

// Regular grid over [x0, x1] x [y0, y1] with the given spacing; ids g<i>_<j>.
[[nodiscard]] std::vector<GridRecord> make_regular_grid(double x0, double x1, double y0, double y1,
                                                        double spacing);

// Shortest round-trip decimal representation.
[[nodiscard]] std::string format_double(double v);

// Writes to `path`.tmp and renames over `path`.
void write_file_atomic(const std::string& path, const std::string& content);
[[nodiscard]] std::string read_file(const std::string& path);

}  // namespace mgpf::io
