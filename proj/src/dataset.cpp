#include "endiv/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace endiv {

void to_json(nlohmann::json& j, const ValidationReport& r)
{
    j = nlohmann::json{{"ok", r.ok()}, {"violations", r.violations}};
}

ValidationReport validate(const Dataset& d)
{
    ValidationReport r;
    const Index n = d.y.size();
    if (n < 2)
        r.violations.push_back("n >= 2 (got n = " + std::to_string(n) + ")");
    if (d.X.rows() != n)
        r.violations.push_back("X has " + std::to_string(d.X.rows()) + " rows, expected " +
                               std::to_string(n));
    if (d.Z.rows() != n)
        r.violations.push_back("Z has " + std::to_string(d.Z.rows()) + " rows, expected " +
                               std::to_string(n));
    if (d.p() < 1)
        r.violations.push_back("p >= 1");
    if (d.K() < d.p())
        r.violations.push_back("K >= p (got K = " + std::to_string(d.K()) +
                               ", p = " + std::to_string(d.p()) + ")");
    if (!d.y.allFinite())
        r.violations.push_back("y has non-finite entries");
    if (!d.X.allFinite())
        r.violations.push_back("X has non-finite entries");
    if (!d.Z.allFinite())
        r.violations.push_back("Z has non-finite entries");
    if (d.truth) {
        if (d.truth->beta0.size() != d.p())
            r.violations.push_back("truth.beta0 has wrong length");
        if (d.truth->xi.size() != n)
            r.violations.push_back("truth.xi has wrong length");
    }
    return r;
}

void require_valid(const Dataset& d)
{
    auto r = validate(d);
    if (r.ok())
        return;
    std::string msg = "invalid dataset:";
    for (const auto& v : r.violations)
        msg += " [" + v + "]";
    if (d.K() < d.p())
        throw IdentificationError(msg);
    throw DimensionError(msg);
}

void PenaltyConfig::check() const
{
    if (!(lambda_t > 0.0) || !std::isfinite(lambda_t))
        throw ParameterError("lambda_t must be positive");
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw ParameterError("tau must be positive");
    if (!(c >= 1.0))
        throw ParameterError("c must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("alpha must lie in (0, 1)");
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

// Index of "<prefix><k>" with k >= 1, or 0 when the name does not match.
long indexed_column(std::string_view name, const std::string& prefix)
{
    if (name.size() <= prefix.size() || name.substr(0, prefix.size()) != prefix)
        return 0;
    auto digits = name.substr(prefix.size());
    if (digits.front() == '0')
        return 0;
    long k = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec != std::errc{} || ptr != digits.data() + digits.size())
        return 0;
    return k;
}

} // namespace

Dataset read_dataset(std::istream& in, const Schema& schema)
{
    std::string line;
    if (!std::getline(in, line))
        throw SchemaError("missing header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF)
        line.erase(0, 3); // UTF-8 byte order mark

    std::vector<std::string> header;
    for (auto cell : split_commas(line))
        header.emplace_back(trim(cell));
    long y_col = -1;
    std::map<long, long> x_cols, z_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        auto name = trim(header[c]);
        if (name == schema.response) {
            if (y_col >= 0)
                throw SchemaError("duplicate column '" + std::string(name) + "'");
            y_col = static_cast<long>(c);
        } else if (long k = indexed_column(name, schema.regressor_prefix); k > 0) {
            if (!x_cols.emplace(k, c).second)
                throw SchemaError("duplicate column '" + std::string(name) + "'");
        } else if (long k2 = indexed_column(name, schema.instrument_prefix); k2 > 0) {
            if (!z_cols.emplace(k2, c).second)
                throw SchemaError("duplicate column '" + std::string(name) + "'");
        }
    }
    if (y_col < 0)
        throw SchemaError("missing column '" + schema.response + "'");
    if (x_cols.empty())
        throw SchemaError("missing column '" + schema.regressor_prefix + "1'");
    if (z_cols.empty())
        throw SchemaError("missing column '" + schema.instrument_prefix + "1'");
    auto check_contiguous = [](const std::map<long, long>& cols, const std::string& prefix) {
        long expect = 1;
        for (const auto& [k, c] : cols) {
            if (k != expect)
                throw SchemaError("missing column '" + prefix + std::to_string(expect) + "'");
            ++expect;
        }
    };
    check_contiguous(x_cols, schema.regressor_prefix);
    check_contiguous(z_cols, schema.instrument_prefix);

    const long p = static_cast<long>(x_cols.size());
    const long K = static_cast<long>(z_cols.size());
    if (K < p)
        throw IdentificationError("identification requires K >= p (got K = " +
                                  std::to_string(K) + ", p = " + std::to_string(p) + ")");

    std::vector<double> values; // row-major staging
    const std::size_t width = header.size();
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        auto cells = split_commas(line);
        if (cells.size() != width)
            throw ParseError("row " + std::to_string(line_no) + ": expected " +
                             std::to_string(width) + " cells, got " + std::to_string(cells.size()));
        for (std::size_t c = 0; c < width; ++c) {
            auto cell = trim(cells[c]);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() ||
                !std::isfinite(v))
                throw ParseError("row " + std::to_string(line_no) + ", column '" +
                                 std::string(trim(header[c])) + "': not a finite number '" +
                                 std::string(cell) + "'");
            values.push_back(v);
        }
        ++rows;
    }

    Dataset d;
    const auto n = static_cast<Index>(rows);
    d.y.resize(n);
    d.X.resize(n, p);
    d.Z.resize(n, K);
    for (Index i = 0; i < n; ++i) {
        const double* row = values.data() + static_cast<std::size_t>(i) * width;
        d.y[i] = row[y_col];
        for (const auto& [k, c] : x_cols)
            d.X(i, k - 1) = row[c];
        for (const auto& [k, c] : z_cols)
            d.Z(i, k - 1) = row[c];
    }
    require_valid(d);
    return d;
}

Dataset load_dataset(const std::string& path, const Schema& schema)
{
    std::ifstream in(path);
    if (!in)
        throw std::ios_base::failure("cannot open '" + path + "'");
    return read_dataset(in, schema);
}

namespace {

void put_double(std::ostream& out, double v)
{
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, ptr - buf);
}

} // namespace

void write_dataset(std::ostream& out, const Dataset& d, const Schema& schema)
{
    out << schema.response;
    for (Index k = 0; k < d.p(); ++k)
        out << ',' << schema.regressor_prefix << (k + 1);
    for (Index k = 0; k < d.K(); ++k)
        out << ',' << schema.instrument_prefix << (k + 1);
    out << '\n';
    for (Index i = 0; i < d.n(); ++i) {
        put_double(out, d.y[i]);
        for (Index k = 0; k < d.p(); ++k) {
            out << ',';
            put_double(out, d.X(i, k));
        }
        for (Index k = 0; k < d.K(); ++k) {
            out << ',';
            put_double(out, d.Z(i, k));
        }
        out << '\n';
    }
}

void save_dataset(const std::string& path, const Dataset& d, const Schema& schema)
{
    std::ofstream out(path);
    if (!out)
        throw std::ios_base::failure("cannot write '" + path + "'");
    write_dataset(out, d, schema);
}

} // namespace endiv
