#include "mgpf/io.hpp"

#include "mgpf/errors.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace mgpf::io {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        out.push_back(trim(std::string_view(line).substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (header[k] == name) return static_cast<int>(k);
    }
    return -1;
}

int CsvTable::require(const std::string& name) const {
    const int c = column(name);
    if (c < 0) throw ValidationError(fmt::format("{}: missing required column '{}'", path, name));
    return c;
}

double CsvTable::number(std::size_t row, int col) const {
    const std::string& s = rows[row][static_cast<std::size_t>(col)];
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (s.empty() || res.ec != std::errc() || res.ptr != last) {
        if (s == "nan" || s == "NaN" || s == "NA") return std::numeric_limits<double>::quiet_NaN();
        throw ValidationError(fmt::format("{}:{}: column '{}' is not a number: '{}'", path, lines[row],
                                          header[static_cast<std::size_t>(col)], s));
    }
    return v;
}

double CsvTable::optional_number(std::size_t row, int col) const {
    if (col < 0 || rows[row][static_cast<std::size_t>(col)].empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return number(row, col);
}

CsvTable parse_csv(std::istream& in, const std::string& name, const std::vector<std::string>& required) {
    CsvTable t;
    t.path = name;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (!have_header) {
            if (!fields.empty() && fields[0].starts_with("\xEF\xBB\xBF")) fields[0].erase(0, 3);
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw ValidationError(fmt::format("{}:{}: expected {} fields, found {}", name, lineno,
                                              t.header.size(), fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.lines.push_back(lineno);
    }
    if (!have_header) throw ValidationError(fmt::format("{}: empty file (no header)", name));
    for (const auto& c : required) (void)t.require(c);
    return t;
}

CsvTable read_csv(const std::string& path, const std::vector<std::string>& required) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
    return parse_csv(in, path, required);
}

std::vector<SiteRecord> read_sites(const std::string& path) {
    const CsvTable t = read_csv(path, {"site_id", "network_id", "x", "y"});
    const int ci = t.require("site_id"), cn = t.require("network_id"), cx = t.require("x"), cy = t.require("y");
    std::vector<SiteRecord> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        SiteRecord s{t.rows[r][ci], t.rows[r][cn], {t.number(r, cx), t.number(r, cy)}};
        if (s.site_id.empty()) throw ValidationError(fmt::format("{}:{}: empty site_id", path, t.lines[r]));
        if (!std::isfinite(s.loc.x) || !std::isfinite(s.loc.y)) {
            throw ValidationError(fmt::format("{}:{}: non-finite coordinates", path, t.lines[r]));
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<MeasurementRecord> read_measurements(const std::string& path) {
    const CsvTable t = read_csv(path, {"site_id", "network_id", "timestamp", "reading", "rh", "temp", "weekend"});
    const int ci = t.require("site_id"), cn = t.require("network_id"), ct = t.require("timestamp"),
              cr = t.require("reading"), crh = t.require("rh"), ctemp = t.require("temp"),
              cw = t.require("weekend");
    std::vector<MeasurementRecord> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        MeasurementRecord m;
        m.site_id = t.rows[r][ci];
        m.network_id = t.rows[r][cn];
        m.timestamp = t.rows[r][ct];
        m.reading = t.optional_number(r, cr);
        m.z.rh = t.optional_number(r, crh);
        m.z.temp = t.optional_number(r, ctemp);
        m.z.weekend = t.optional_number(r, cw);
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<ReferenceRecord> read_reference(const std::string& path) {
    const CsvTable t = read_csv(path, {"site_id", "timestamp", "value"});
    const int ci = t.require("site_id"), ct = t.require("timestamp"), cv = t.require("value");
    std::vector<ReferenceRecord> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out.push_back({t.rows[r][ci], t.rows[r][ct], t.optional_number(r, cv)});
    }
    return out;
}

std::vector<GridRecord> read_grid(const std::string& path) {
    const CsvTable t = read_csv(path, {"site_id", "x", "y"});
    const int ci = t.require("site_id"), cx = t.require("x"), cy = t.require("y");
    std::vector<GridRecord> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        GridRecord g{t.rows[r][ci], {t.number(r, cx), t.number(r, cy)}};
        if (!std::isfinite(g.loc.x) || !std::isfinite(g.loc.y)) {
            throw ValidationError(fmt::format("{}:{}: non-finite coordinates", path, t.lines[r]));
        }
        out.push_back(std::move(g));
    }
    return out;
}

obs::CollocatedSeries read_collocated(const std::string& path) {
    const CsvTable t = read_csv(path, {"timestamp", "x", "y"});
    const int ct = t.require("timestamp"), cx = t.require("x"), cy = t.require("y");
    const int crh = t.column("rh"), ctemp = t.column("temp"), cw = t.column("weekend");
    obs::CollocatedSeries s;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        s.time.push_back(t.rows[r][ct]);
        s.x.push_back(t.optional_number(r, cx));
        s.y.push_back(t.optional_number(r, cy));
        s.z.push_back({t.optional_number(r, crh), t.optional_number(r, ctemp), t.optional_number(r, cw)});
    }
    return s;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "";
    return fmt::format("{}", v);
}

void write_sites(std::ostream& out, const std::vector<SiteRecord>& v) {
    out << "site_id,network_id,x,y\n";
    for (const auto& s : v) {
        out << s.site_id << ',' << s.network_id << ',' << format_double(s.loc.x) << ',' << format_double(s.loc.y)
            << '\n';
    }
}

void write_measurements(std::ostream& out, const std::vector<MeasurementRecord>& v) {
    out << "site_id,network_id,timestamp,reading,rh,temp,weekend\n";
    for (const auto& m : v) {
        out << m.site_id << ',' << m.network_id << ',' << m.timestamp << ',' << format_double(m.reading) << ','
            << format_double(m.z.rh) << ',' << format_double(m.z.temp) << ',' << format_double(m.z.weekend)
            << '\n';
    }
}

void write_reference(std::ostream& out, const std::vector<ReferenceRecord>& v) {
    out << "site_id,timestamp,value\n";
    for (const auto& r : v) out << r.site_id << ',' << r.timestamp << ',' << format_double(r.value) << '\n';
}

void write_grid(std::ostream& out, const std::vector<GridRecord>& v) {
    out << "site_id,x,y\n";
    for (const auto& g : v) out << g.site_id << ',' << format_double(g.loc.x) << ',' << format_double(g.loc.y) << '\n';
}

void write_collocated(std::ostream& out, const obs::CollocatedSeries& s) {
    out << "timestamp,x,y,rh,temp,weekend\n";
    for (std::size_t k = 0; k < s.size(); ++k) {
        out << s.time[k] << ',' << format_double(s.x[k]) << ',' << format_double(s.y[k]) << ','
            << format_double(s.z[k].rh) << ',' << format_double(s.z[k].temp) << ','
            << format_double(s.z[k].weekend) << '\n';
    }
}

std::vector<GridRecord> make_regular_grid(double x0, double x1, double y0, double y1, double spacing) {
    if (!(spacing > 0.0) || !(x1 >= x0) || !(y1 >= y0)) {
        throw ValidationError("regular grid needs spacing > 0 and ordered bounds");
    }
    const auto nx = static_cast<int>(std::floor((x1 - x0) / spacing + 1e-9)) + 1;
    const auto ny = static_cast<int>(std::floor((y1 - y0) / spacing + 1e-9)) + 1;
    std::vector<GridRecord> out;
    out.reserve(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            out.push_back({fmt::format("g{}_{}", i, j), {x0 + i * spacing, y0 + j * spacing}});
        }
    }
    return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError(fmt::format("cannot write '{}'", tmp));
        out << content;
        if (!out) throw ValidationError(fmt::format("write failed for '{}'", tmp));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw ValidationError(fmt::format("cannot rename '{}' to '{}': {}", tmp, path, ec.message()));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace mgpf::io
