#include "longconf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "longconf/random.hpp"

namespace longconf {

RandomStream derive_stream(const SeedSpec& seed, std::string_view label, std::uint64_t index) {
    if (label.empty()) throw InvalidInput("derive_stream: label must be non-empty");
    return seed.stream().derive(label, index);
}

TreatmentRegime::TreatmentRegime(std::vector<int> a_bar) : a_(std::move(a_bar)) {
    for (int v : a_) {
        if (v != 0 && v != 1) throw InvalidInput("treatment regime entries must be 0 or 1");
    }
}

TreatmentRegime TreatmentRegime::parse(const std::string& bits) {
    std::vector<int> a;
    for (char c : bits) {
        if (c == ',' || c == ' ') continue;
        if (c != '0' && c != '1') throw InvalidInput("bad regime string: " + bits);
        a.push_back(c - '0');
    }
    return TreatmentRegime(std::move(a));
}

TreatmentRegime TreatmentRegime::constant(std::size_t visits, int value) {
    return TreatmentRegime(std::vector<int>(visits, value));
}

std::string TreatmentRegime::to_string() const {
    std::string s;
    for (int v : a_) s.push_back(static_cast<char>('0' + v));
    return s;
}

int cumulative_dose(const TreatmentRegime& r) {
    return std::accumulate(r.values().begin(), r.values().end(), 0);
}

LongitudinalDataset::LongitudinalDataset(std::size_t visits, std::size_t covariates_per_visit,
                                         std::vector<std::size_t> latent_per_visit)
    : visits_(visits), p_(covariates_per_visit), latent_per_visit_(std::move(latent_per_visit)) {
    if (visits == 0) throw InvalidInput("dataset needs at least one visit");
    if (p_ == 0) throw InvalidInput("dataset needs at least one covariate per visit");
    if (latent_per_visit_.empty()) latent_per_visit_.assign(visits, 0);
    if (latent_per_visit_.size() != visits) {
        throw InvalidInput("latent_per_visit must have one entry per visit");
    }
    latent_offset_.resize(visits);
    for (std::size_t j = 0; j < visits; ++j) {
        latent_offset_[j] = latent_total_;
        latent_total_ += latent_per_visit_[j];
    }
}

void LongitudinalDataset::add_subject(std::span<const int> x, std::span<const int> a, double y,
                                      std::span<const double> u) {
    if (x.size() != visits_ * p_) throw InvalidInput("covariate row has wrong length");
    if (a.size() != visits_) throw InvalidInput("treatment row has wrong length");
    if (u.size() != latent_total_) throw InvalidInput("latent row has wrong length");
    for (int v : a) {
        if (v != 0 && v != 1) throw InvalidInput("treatment values must be 0 or 1");
    }
    for (int v : x) {
        if (v != 0 && v != 1) throw InvalidInput("covariate values must be 0 or 1");
    }
    if (!std::isfinite(y)) throw InvalidInput("outcome must be finite");
    x_.insert(x_.end(), x.begin(), x.end());
    a_.insert(a_.end(), a.begin(), a.end());
    y_.push_back(y);
    u_.insert(u_.end(), u.begin(), u.end());
}

LongitudinalDataset LongitudinalDataset::without_latent() const {
    LongitudinalDataset d(visits_, p_);
    d.x_ = x_;
    d.a_ = a_;
    d.y_ = y_;
    return d;
}

LongitudinalDataset LongitudinalDataset::select(std::span<const std::size_t> idx) const {
    LongitudinalDataset d(visits_, p_, latent_per_visit_);
    d.x_.reserve(idx.size() * visits_ * p_);
    d.a_.reserve(idx.size() * visits_);
    d.y_.reserve(idx.size());
    for (std::size_t i : idx) {
        auto xs = covariates(i);
        d.x_.insert(d.x_.end(), xs.begin(), xs.end());
        auto as = treatments(i);
        d.a_.insert(d.a_.end(), as.begin(), as.end());
        d.y_.push_back(y_[i]);
        d.u_.insert(d.u_.end(), u_.begin() + static_cast<std::ptrdiff_t>(i * latent_total_),
                    u_.begin() + static_cast<std::ptrdiff_t>((i + 1) * latent_total_));
    }
    return d;
}

void LongitudinalDataset::require_no_latent(const std::string& caller) const {
    if (has_latent()) {
        throw InvalidInput(caller +
                           ": dataset carries oracle-only latent columns; drop them or use the "
                           "U-included benchmark");
    }
}

TreatmentRegime LongitudinalDataset::regime_of(std::size_t i) const {
    auto t = treatments(i);
    return TreatmentRegime(std::vector<int>(t.begin(), t.end()));
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> x_names(const LongitudinalDataset& d) {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < d.visits(); ++j) {
        for (std::size_t k = 0; k < d.covariates_per_visit(); ++k) {
            if (d.covariates_per_visit() == 1) {
                out.push_back("x" + std::to_string(j + 1));
            } else {
                out.push_back("x" + std::to_string(j + 1) + "_" + std::to_string(k + 1));
            }
        }
    }
    return out;
}

std::vector<std::string> u_names(const LongitudinalDataset& d) {
    std::vector<std::string> out;
    bool single = std::all_of(d.latent_per_visit().begin(), d.latent_per_visit().end(),
                              [](std::size_t m) { return m <= 1; });
    for (std::size_t j = 0; j < d.visits(); ++j) {
        for (std::size_t m = 0; m < d.latent_count(j); ++m) {
            if (single) {
                out.push_back("u" + std::to_string(j + 1));
            } else {
                out.push_back("u" + std::to_string(j + 1) + "_" + std::to_string(m + 1));
            }
        }
    }
    return out;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

// Parses "x3" -> (3, 0) and "x3_2" -> (3, 2).
bool parse_indexed(const std::string& name, char prefix, int& j, int& k) {
    if (name.size() < 2 || name[0] != prefix) return false;
    const char* p = name.data() + 1;
    const char* end = name.data() + name.size();
    auto r = std::from_chars(p, end, j);
    if (r.ec != std::errc() || j < 1) return false;
    k = 0;
    if (r.ptr == end) return true;
    if (*r.ptr != '_') return false;
    auto r2 = std::from_chars(r.ptr + 1, end, k);
    return r2.ec == std::errc() && r2.ptr == end && k >= 1;
}

double parse_number(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        throw InvalidInput("CSV line " + std::to_string(line_no) + ": bad or missing value '" +
                           s + "'");
    }
    return v;
}

int parse_binary(const std::string& s, std::size_t line_no) {
    double v = parse_number(s, line_no);
    if (v != 0.0 && v != 1.0) {
        throw InvalidInput("CSV line " + std::to_string(line_no) + ": expected 0/1, got '" + s +
                           "'");
    }
    return static_cast<int>(v);
}

}  // namespace

void write_csv(std::ostream& os, const LongitudinalDataset& d,
               const std::vector<std::pair<std::string, std::vector<double>>>& extra) {
    const auto xn = x_names(d);
    const auto un = u_names(d);
    os << "id";
    for (const auto& s : xn) os << ',' << s;
    for (std::size_t j = 0; j < d.visits(); ++j) os << ",a" << j + 1;
    os << ",y";
    for (const auto& s : un) os << ',' << s;
    for (const auto& [name, col] : extra) {
        if (col.size() != d.n()) throw InvalidInput("extra column " + name + " has wrong length");
        os << ',' << name;
    }
    os << '\n';
    for (std::size_t i = 0; i < d.n(); ++i) {
        os << i + 1;
        for (int v : d.covariates(i)) os << ',' << v;
        for (int v : d.treatments(i)) os << ',' << v;
        os << ',' << format_double(d.y(i));
        for (std::size_t j = 0; j < d.visits(); ++j) {
            for (std::size_t m = 0; m < d.latent_count(j); ++m) {
                os << ',' << format_double(d.u(i, j, m));
            }
        }
        for (const auto& [name, col] : extra) os << ',' << format_double(col[i]);
        os << '\n';
    }
}

LongitudinalDataset read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidInput("CSV: missing header row");
    const auto header = split(line);
    std::map<std::pair<int, int>, std::size_t> xcol, ucol;
    std::map<int, std::size_t> acol;
    std::size_t ycol = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
        int j = 0, k = 0;
        const auto& h = header[c];
        if (h == "y") {
            ycol = c;
        } else if (parse_indexed(h, 'x', j, k)) {
            xcol[{j, k}] = c;
        } else if (parse_indexed(h, 'u', j, k)) {
            ucol[{j, k}] = c;
        } else if (parse_indexed(h, 'a', j, k) && k == 0) {
            acol[j] = c;
        }
    }
    if (ycol == header.size()) throw InvalidInput("CSV: header has no 'y' column");
    const std::size_t visits = acol.size();
    if (visits == 0) throw InvalidInput("CSV: header has no treatment columns a1..aJ");
    for (std::size_t j = 1; j <= visits; ++j) {
        if (!acol.count(static_cast<int>(j))) throw InvalidInput("CSV: treatment columns not contiguous");
    }
    // Covariates per visit: either single x{j} or x{j}_{k} for k = 1..p.
    std::size_t p = 0;
    for (const auto& [key, c] : xcol) {
        if (static_cast<std::size_t>(key.first) > visits) {
            throw InvalidInput("CSV: covariate column for visit beyond J");
        }
        p = std::max<std::size_t>(p, key.second == 0 ? 1 : static_cast<std::size_t>(key.second));
    }
    if (p == 0) throw InvalidInput("CSV: header has no covariate columns");
    std::vector<std::size_t> xorder;
    for (std::size_t j = 1; j <= visits; ++j) {
        for (std::size_t k = 1; k <= p; ++k) {
            auto it = xcol.find({static_cast<int>(j), p == 1 ? 0 : static_cast<int>(k)});
            if (it == xcol.end()) {
                throw InvalidInput("CSV: missing covariate column for visit " + std::to_string(j));
            }
            xorder.push_back(it->second);
        }
    }
    std::vector<std::size_t> latent(visits, 0);
    std::vector<std::size_t> uorder;
    for (std::size_t j = 1; j <= visits; ++j) {
        if (ucol.count({static_cast<int>(j), 0})) {
            latent[j - 1] = 1;
            uorder.push_back(ucol[{static_cast<int>(j), 0}]);
            continue;
        }
        for (int m = 1; ucol.count({static_cast<int>(j), m}); ++m) {
            latent[j - 1] += 1;
            uorder.push_back(ucol[{static_cast<int>(j), m}]);
        }
    }
    if (uorder.size() != ucol.size()) throw InvalidInput("CSV: latent columns not contiguous");

    LongitudinalDataset d(visits, p, latent);
    std::vector<int> xs(visits * p), as(visits);
    std::vector<double> us(uorder.size());
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw InvalidInput("CSV line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields");
        }
        for (std::size_t q = 0; q < xorder.size(); ++q) xs[q] = parse_binary(cells[xorder[q]], line_no);
        for (std::size_t j = 0; j < visits; ++j) {
            as[j] = parse_binary(cells[acol[static_cast<int>(j + 1)]], line_no);
        }
        for (std::size_t q = 0; q < uorder.size(); ++q) us[q] = parse_number(cells[uorder[q]], line_no);
        d.add_subject(xs, as, parse_number(cells[ycol], line_no), us);
    }
    return d;
}

LongitudinalDataset read_csv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot open " + path);
    return read_csv(f);
}

void write_csv_file(const std::string& path, const LongitudinalDataset& d,
                    const std::vector<std::pair<std::string, std::vector<double>>>& extra) {
    std::ofstream f(path);
    if (!f) throw InvalidInput("cannot write " + path);
    write_csv(f, d, extra);
}

}  // namespace longconf
