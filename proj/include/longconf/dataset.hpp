#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "longconf/error.hpp"

namespace longconf {

/// A fixed treatment sequence over all J visits.
class TreatmentRegime {
public:
    TreatmentRegime() = default;
    explicit TreatmentRegime(std::vector<int> a_bar);

    /// Parses "101" style strings.
    static TreatmentRegime parse(const std::string& bits);
    static TreatmentRegime constant(std::size_t visits, int value);

    std::size_t visits() const noexcept { return a_.size(); }
    int operator[](std::size_t j) const { return a_[j]; }
    std::span<const int> values() const noexcept { return a_; }
    std::string to_string() const;

    bool operator==(const TreatmentRegime&) const = default;

private:
    std::vector<int> a_;
};

/// Number of visits with treatment switched on.
int cumulative_dose(const TreatmentRegime& r);

/// n subjects by J visits of binary covariates and treatments, one terminal
/// continuous outcome, and optional simulator-emitted latent confounders.
///
/// Storage is flat and row-major by subject. Latent values are oracle-only:
/// estimators must call require_no_latent() unless they are the explicit
/// U-included benchmark.
class LongitudinalDataset {
public:
    LongitudinalDataset() = default;

    /// Empty dataset shape; subjects are appended with add_subject().
    LongitudinalDataset(std::size_t visits, std::size_t covariates_per_visit,
                        std::vector<std::size_t> latent_per_visit = {});

    std::size_t n() const noexcept { return y_.size(); }
    std::size_t visits() const noexcept { return visits_; }
    std::size_t covariates_per_visit() const noexcept { return p_; }

    /// x[j][k] flattened as j * p + k, a[j], latent u[j][m] flattened per latent_offset().
    void add_subject(std::span<const int> x, std::span<const int> a, double y,
                     std::span<const double> u = {});

    int x(std::size_t i, std::size_t j, std::size_t k = 0) const {
        return x_[(i * visits_ + j) * p_ + k];
    }
    int a(std::size_t i, std::size_t j) const { return a_[i * visits_ + j]; }
    double y(std::size_t i) const { return y_[i]; }
    std::span<const double> outcomes() const noexcept { return y_; }
    std::span<const int> treatments(std::size_t i) const {
        return {a_.data() + i * visits_, visits_};
    }
    std::span<const int> covariates(std::size_t i) const {
        return {x_.data() + i * visits_ * p_, visits_ * p_};
    }

    // Latent (oracle-only) confounders.
    bool has_latent() const noexcept { return latent_total_ > 0; }
    std::size_t latent_count(std::size_t j) const { return latent_per_visit_.at(j); }
    const std::vector<std::size_t>& latent_per_visit() const noexcept { return latent_per_visit_; }
    std::size_t latent_total() const noexcept { return latent_total_; }
    double u(std::size_t i, std::size_t j, std::size_t m = 0) const {
        return u_[i * latent_total_ + latent_offset_[j] + m];
    }

    /// Copy with latent columns removed.
    LongitudinalDataset without_latent() const;

    /// Subset/resample by subject index (indices may repeat).
    LongitudinalDataset select(std::span<const std::size_t> idx) const;

    /// Throws InvalidInput naming the caller when latent columns are present.
    void require_no_latent(const std::string& caller) const;

    TreatmentRegime regime_of(std::size_t i) const;

    bool operator==(const LongitudinalDataset&) const = default;

private:
    std::size_t visits_ = 0;
    std::size_t p_ = 1;
    std::vector<std::size_t> latent_per_visit_;
    std::vector<std::size_t> latent_offset_;
    std::size_t latent_total_ = 0;
    std::vector<int> x_;
    std::vector<int> a_;
    std::vector<double> y_;
    std::vector<double> u_;
};

// Wide CSV: id,x1..xJ,a1..aJ,y[,u1..uJ]; multi-covariate columns x{j}_{k}, multi-latent u{j}_{m}.
// Extra columns listed in `extra` are appended after the base columns.
void write_csv(std::ostream& os, const LongitudinalDataset& d,
               const std::vector<std::pair<std::string, std::vector<double>>>& extra = {});
LongitudinalDataset read_csv(std::istream& is);
LongitudinalDataset read_csv_file(const std::string& path);
void write_csv_file(const std::string& path, const LongitudinalDataset& d,
                    const std::vector<std::pair<std::string, std::vector<double>>>& extra = {});

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace longconf
