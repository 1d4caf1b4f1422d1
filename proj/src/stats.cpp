#include "cbct/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "cbct/errors.hpp"

namespace cbct {

namespace {

// Regularized incomplete gamma, upper tail Q(a, x).
double gamma_q(double a, double x) {
    if (x < 0 || a <= 0) throw ParamError("gamma_q domain error");
    if (x == 0) return 1.0;
    if (x < a + 1.0) {
        // series for P(a,x)
        double sum = 1.0 / a;
        double term = sum;
        double ap = a;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-16) break;
        }
        const double p = sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        return 1.0 - p;
    }
    // continued fraction for Q(a,x), modified Lentz
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized incomplete beta I_x(a, b) via continued fraction.
double beta_cf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return h;
}

double inc_beta(double a, double b, double x) {
    if (x <= 0) return 0.0;
    if (x >= 1) return 1.0;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

// Dense ranks of the union of observed values; ordinal categories.
std::vector<int> dense_rank_two(const std::vector<int>& a, const std::vector<int>& b,
                                std::vector<int>& ra, std::vector<int>& rb) {
    std::vector<int> values;
    values.insert(values.end(), a.begin(), a.end());
    values.insert(values.end(), b.begin(), b.end());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    auto rank_of = [&](int v) {
        return int(std::lower_bound(values.begin(), values.end(), v) - values.begin());
    };
    ra.resize(a.size());
    rb.resize(b.size());
    for (size_t i = 0; i < a.size(); ++i) ra[i] = rank_of(a[i]);
    for (size_t i = 0; i < b.size(); ++i) rb[i] = rank_of(b[i]);
    return values;
}

// Mid-ranks of one reader's scores across items; also returns sum(t^3 - t).
std::vector<double> midranks(const std::vector<double>& scores, double& tie_term) {
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return scores[i] < scores[j]; });
    std::vector<double> ranks(n);
    tie_term = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = 0.5 * (double(i + 1) + double(j + 1));
        const double t = double(j - i + 1);
        tie_term += t * t * t - t;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (p <= 0.0 || p >= 1.0) throw ParamError("normal_quantile requires p in (0,1)");
    // Acklam's approximation
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= phigh) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        const double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    // one Halley step against the exact CDF
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    x = x - u / (1 + x * u / 2.0);
    return x;
}

double chi_square_sf(double x, double df) {
    if (df <= 0) throw ParamError("chi_square_sf requires df > 0");
    if (x <= 0) return 1.0;
    return gamma_q(0.5 * df, 0.5 * x);
}

double student_t_two_sided(double t, double df) {
    if (df <= 0) throw ParamError("student_t_two_sided requires df > 0");
    const double x = df / (df + t * t);
    return inc_beta(0.5 * df, 0.5, x);
}

std::string agreement_band(double v) {
    if (v < 0.20) return "poor";
    if (v < 0.40) return "fair";
    if (v < 0.60) return "moderate";
    if (v < 0.80) return "good";
    return "excellent";
}

KappaResult weighted_kappa(const std::vector<int>& rater_a, const std::vector<int>& rater_b) {
    if (rater_a.size() != rater_b.size())
        throw ShapeError("weighted_kappa: raters scored different item counts");
    const int64_t n = int64_t(rater_a.size());
    if (n < 1) throw ParamError("weighted_kappa: empty rating vectors");
    std::vector<int> ra, rb;
    const auto values = dense_rank_two(rater_a, rater_b, ra, rb);
    const int64_t k = int64_t(values.size());
    if (k < 2) throw ParamError("weighted_kappa: fewer than 2 observed categories");

    std::vector<double> obs(k * k, 0.0);
    for (int64_t i = 0; i < n; ++i) obs[ra[i] * k + rb[i]] += 1.0;
    std::vector<double> pa(k, 0.0), pb(k, 0.0);
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) {
            pa[i] += obs[i * k + j];
            pb[j] += obs[i * k + j];
        }
    for (auto& v : pa) v /= double(n);
    for (auto& v : pb) v /= double(n);

    // similarity weights v_ij = 1 - |i-j|/(k-1)
    auto vw = [&](int64_t i, int64_t j) {
        return 1.0 - std::abs(double(i - j)) / double(k - 1);
    };
    double po = 0.0, pe = 0.0;
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) {
            po += vw(i, j) * obs[i * k + j] / double(n);
            pe += vw(i, j) * pa[i] * pb[j];
        }
    KappaResult r;
    r.n_items = n;
    r.n_categories = k;
    r.kappa = (po - pe) / (1.0 - pe);
    r.band = agreement_band(r.kappa);

    // large-sample variance под the null (Fleiss, Cohen & Everitt form)
    std::vector<double> vbar_row(k, 0.0), vbar_col(k, 0.0);
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) {
            vbar_row[i] += pb[j] * vw(i, j);
            vbar_col[j] += pa[i] * vw(i, j);
        }
    double s = 0.0;
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) {
            const double dev = vw(i, j) - (vbar_row[i] + vbar_col[j]);
            s += pa[i] * pb[j] * dev * dev;
        }
    const double var0 = (s - pe * pe) / (double(n) * (1.0 - pe) * (1.0 - pe));
    if (var0 > 0) {
        r.z = r.kappa / std::sqrt(var0);
        r.p_value = 2.0 * normal_cdf(-std::abs(r.z));
    } else {
        r.z = 0.0;
        r.p_value = 1.0;
    }
    return r;
}

KendallWResult kendall_w(const std::vector<std::vector<double>>& ratings) {
    const int64_t n = int64_t(ratings.size());  // items
    if (n < 3) throw ParamError("kendall_w needs at least 3 items");
    const int64_t m = n > 0 ? int64_t(ratings[0].size()) : 0;  // readers
    if (m < 2) throw ParamError("kendall_w needs at least 2 readers");
    for (const auto& row : ratings)
        if (int64_t(row.size()) != m) throw ShapeError("kendall_w: ragged rating table");

    std::vector<double> rank_sum(n, 0.0);
    double tie_total = 0.0;
    for (int64_t j = 0; j < m; ++j) {
        std::vector<double> col(n);
        for (int64_t i = 0; i < n; ++i) col[i] = ratings[i][j];
        double tie_term = 0.0;
        const auto rk = midranks(col, tie_term);
        tie_total += tie_term;
        for (int64_t i = 0; i < n; ++i) rank_sum[i] += rk[i];
    }
    const double mean_rank = double(m) * double(n + 1) / 2.0;
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = rank_sum[i] - mean_rank;
        s += d * d;
    }
    const double denom =
        double(m) * double(m) * (double(n) * double(n) * double(n) - double(n)) -
        double(m) * tie_total;
    if (denom <= 0) throw ParamError("kendall_w undefined: all ratings constant");

    KendallWResult r;
    r.w = 12.0 * s / denom;
    r.df = double(n - 1);
    r.chi_square = double(m) * double(n - 1) * r.w;
    r.p_value = chi_square_sf(r.chi_square, r.df);
    r.band = agreement_band(r.w);
    return r;
}

SampleSizeResult noninferiority_sample_size(const SampleSizeInputs& in) {
    if (in.sigma_d <= 0) throw ParamError("sigma_d must be positive");
    if (in.delta + in.mu_d <= 0) throw ParamError("delta + mu_d must be positive");
    if (in.dropout_fraction < 0 || in.dropout_fraction >= 1)
        throw ParamError("dropout_fraction must be in [0,1)");
    if (in.alpha <= 0 || in.alpha >= 1 || in.power <= 0 || in.power >= 1)
        throw ParamError("alpha and power must be in (0,1)");
    const double z_a = normal_quantile(1.0 - in.alpha);
    const double z_b = normal_quantile(in.power);
    const double root = (z_a + z_b) * in.sigma_d / (in.delta + in.mu_d);
    SampleSizeResult r;
    r.n_exact = root * root;
    r.n_required = std::max<int64_t>(1, int64_t(std::ceil(r.n_exact - 1e-12)));
    r.n_enrolled = int64_t(std::ceil(double(r.n_required) / (1.0 - in.dropout_fraction) - 1e-12));
    return r;
}

TuringResult turing_confusion(const std::vector<int>& labels_true,
                              const std::vector<int>& labels_given) {
    if (labels_true.size() != labels_given.size())
        throw ShapeError("turing_confusion: label vectors differ in length");
    TuringResult r;
    for (size_t i = 0; i < labels_true.size(); ++i) {
        const bool t = labels_true[i] != 0, g = labels_given[i] != 0;
        if (t && g) ++r.true_positive;
        else if (!t && g) ++r.false_positive;
        else if (t && !g) ++r.false_negative;
        else ++r.true_negative;
    }
    const double n = double(labels_true.size());
    r.accuracy = n > 0 ? double(r.true_positive + r.true_negative) / n : 0.0;
    const bool degenerate =
        (r.true_positive + r.false_negative == 0) || (r.true_negative + r.false_positive == 0) ||
        (r.true_positive + r.false_positive == 0) || (r.true_negative + r.false_negative == 0);
    if (!degenerate && n > 0) {
        r.kappa = weighted_kappa(labels_true, labels_given).kappa;
    } else {
        // only one category somewhere: fall back to accuracy-based agreement
        r.kappa = r.accuracy == 1.0 ? 1.0 : 0.0;
    }
    return r;
}

PairedTResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("paired_t_test: unequal lengths");
    const int64_t n = int64_t(a.size());
    if (n < 2) throw ParamError("paired_t_test needs at least 2 pairs");
    double mean = 0;
    for (int64_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= double(n);
    double var = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = (a[i] - b[i]) - mean;
        var += d * d;
    }
    var /= double(n - 1);
    PairedTResult r;
    r.mean_diff = mean;
    r.sd_diff = std::sqrt(var);
    r.df = double(n - 1);
    if (r.sd_diff == 0) {
        r.t = mean == 0 ? 0.0 : (mean > 0 ? 1e12 : -1e12);
        r.p_two_sided = mean == 0 ? 1.0 : 0.0;
        return r;
    }
    r.t = mean / (r.sd_diff / std::sqrt(double(n)));
    r.p_two_sided = student_t_two_sided(r.t, r.df);
    return r;
}

std::vector<int> RatingTable::column_int(size_t col) const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        if (col >= row.size()) throw ShapeError("rating table column out of range");
        out.push_back(int(std::llround(row[col])));
    }
    return out;
}

RatingTable load_rating_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rating table: " + path);
    RatingTable t;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty rating table: " + path);
    {
        std::istringstream ls(line);
        std::string cell;
        bool first = true;
        while (std::getline(ls, cell, ',')) {
            if (first) {
                first = false;  // leading "item" column
                continue;
            }
            t.reader_names.push_back(cell);
        }
    }
    if (t.reader_names.empty()) throw IoError("rating table has no reader columns: " + path);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> row;
        bool first = true;
        while (std::getline(ls, cell, ',')) {
            if (first) {
                first = false;
                continue;
            }
            try {
                row.push_back(std::stod(cell));
            } catch (...) {
                throw IoError("non-numeric rating in " + path + ": " + cell);
            }
        }
        if (row.size() != t.reader_names.size())
            throw IoError("ragged rating row in " + path);
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace cbct
