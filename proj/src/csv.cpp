#include "hyperfuse/csv.hpp"

#include "hyperfuse/error.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace hyperfuse {

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    if (ec != std::errc()) throw Error(ErrorKind::IoError, "cannot format value");
    return std::string(buf, end);
}

double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw Error(ErrorKind::ParseError, "not a number: '" + std::string(text) + "'");
    return v;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        parts.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

}  // namespace

void write_tensor_csv(std::ostream& out, const Tensor& t) {
    out << "shape=";
    for (std::size_t i = 0; i < t.rank(); ++i) out << (i ? "," : "") << t.shape()[i];
    out << '\n';
    const std::size_t row = t.rank() == 0 ? 1 : t.shape().back();
    if (row == 0) return;
    for (std::size_t i = 0; i < t.numel(); ++i) {
        out << format_double(t[i]);
        out << ((i + 1) % row == 0 ? '\n' : ',');
    }
}

Tensor read_tensor_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "missing shape header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    constexpr std::string_view prefix = "shape=";
    if (line.rfind(prefix, 0) != 0) throw Error(ErrorKind::ParseError, "header must start with 'shape='");
    Shape shape;
    std::string_view dims = std::string_view(line).substr(prefix.size());
    if (!dims.empty()) {
        for (auto part : split(dims, ',')) {
            std::size_t e = 0;
            auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), e);
            if (ec != std::errc() || ptr != part.data() + part.size())
                throw Error(ErrorKind::ParseError, "bad extent '" + std::string(part) + "'");
            shape.push_back(e);
        }
    }
    if (shape.size() > 4) throw Error(ErrorKind::ParseError, "rank > 4");
    const std::size_t row = shape.empty() ? 1 : shape.back();
    const std::size_t total = shape_numel(shape);
    std::vector<double> data;
    data.reserve(total);
    while (data.size() < total && std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto parts = split(line, ',');
        if (parts.size() != row)
            throw Error(ErrorKind::ParseError, "expected " + std::to_string(row) + " values per line, got " + std::to_string(parts.size()));
        for (auto p : parts) data.push_back(parse_double(p));
    }
    if (data.size() != total) throw Error(ErrorKind::ParseError, "truncated tensor body");
    while (std::getline(in, line))
        if (!line.empty() && line != "\r") throw Error(ErrorKind::ParseError, "trailing data after tensor body");
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor_csv(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    write_tensor_csv(out, t);
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

Tensor load_tensor_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    return read_tensor_csv(in);
}

}  // namespace hyperfuse
