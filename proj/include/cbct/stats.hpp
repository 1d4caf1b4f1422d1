#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cbct {

// Standard normal quantile (Acklam's rational approximation plus one Halley
// refinement; absolute error well below 1e-9).
double normal_quantile(double p);
double normal_cdf(double x);
// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double df);
// Two-sided p for a Student-t statistic.
double student_t_two_sided(double t, double df);

// Agreement bands used for both kappa and Kendall's W reporting.
std::string agreement_band(double value);

// Linear-weighted Cohen kappa between two ordinal raters. Categories are the
// dense ranks of the values observed across both raters, so any common
// order-preserving relabeling leaves the result unchanged.
struct KappaResult {
    double kappa = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    std::string band;
    int64_t n_items = 0;
    int64_t n_categories = 0;
};
KappaResult weighted_kappa(const std::vector<int>& rater_a, const std::vector<int>& rater_b);

// Kendall's coefficient of concordance with mid-rank tie correction.
// `ratings` is items x readers.
struct KendallWResult {
    double w = 0.0;
    double chi_square = 0.0;
    double p_value = 1.0;
    double df = 0.0;
    std::string band;
};
KendallWResult kendall_w(const std::vector<std::vector<double>>& ratings);

// Paired one-sided non-inferiority sample size:
// N = ceil(((z_{1-alpha} + z_{1-beta}) * sigma_d / (delta + mu_d))^2),
// then inflated for dropout.
struct SampleSizeInputs {
    double alpha = 0.025;          // one-sided significance
    double power = 0.9;            // 1 - beta
    double sigma_d = 0.0;          // SD of paired differences
    double delta = 0.0;            // non-inferiority margin
    double mu_d = 0.0;             // expected paired mean difference
    double dropout_fraction = 0.0;
};
struct SampleSizeResult {
    double n_exact = 0.0;  // pre-ceiling value
    int64_t n_required = 0;
    int64_t n_enrolled = 0;
};
SampleSizeResult noninferiority_sample_size(const SampleSizeInputs& in);

// 2x2 confusion for visual Turing labels plus chance-corrected agreement.
struct TuringResult {
    int64_t true_positive = 0, false_positive = 0, false_negative = 0, true_negative = 0;
    double accuracy = 0.0;
    double kappa = 0.0;
};
TuringResult turing_confusion(const std::vector<int>& labels_true,
                              const std::vector<int>& labels_given);

struct PairedTResult {
    double t = 0.0;
    double df = 0.0;
    double p_two_sided = 1.0;
    double mean_diff = 0.0;
    double sd_diff = 0.0;
};
PairedTResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// CSV rating table: first line `item,<reader>,<reader>,...`, then one row per
// item with integer or decimal scores.
struct RatingTable {
    std::vector<std::string> reader_names;
    std::vector<std::vector<double>> rows;  // items x readers
    std::vector<int> column_int(size_t col) const;
};
RatingTable load_rating_csv(const std::string& path);

}  // namespace cbct
