#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cbct/errors.hpp"
#include "cbct/rng.hpp"
#include "cbct/stats.hpp"

using namespace cbct;

TEST_CASE("normal quantile matches reference values to 1e-9") {
    CHECK(std::abs(normal_quantile(0.975) - 1.959963984540054) < 1e-9);
    CHECK(std::abs(normal_quantile(0.9) - 1.2815515655446004) < 1e-9);
    CHECK(std::abs(normal_quantile(0.5)) < 1e-12);
    CHECK(std::abs(normal_quantile(0.025) + 1.959963984540054) < 1e-9);
    CHECK(std::abs(normal_quantile(1e-6) + 4.753424308822899) < 1e-8);
    CHECK_THROWS_AS(normal_quantile(0.0), ParamError);
}

TEST_CASE("chi-square and t survival functions") {
    // chi2 with df=1: SF(x) = 2*(1 - Phi(sqrt(x)))
    for (double x : {0.5, 1.0, 3.84, 10.0})
        CHECK(chi_square_sf(x, 1) == doctest::Approx(2.0 * (1.0 - normal_cdf(std::sqrt(x)))).epsilon(1e-10));
    // chi2 with df=2 is exponential with mean 2
    CHECK(chi_square_sf(3.0, 2) == doctest::Approx(std::exp(-1.5)).epsilon(1e-12));
    // t with large df approaches the normal
    CHECK(student_t_two_sided(1.96, 1e7) == doctest::Approx(2 * normal_cdf(-1.96)).epsilon(1e-4));
    // t with df=1 is Cauchy: two-sided p = 1 - (2/pi) atan(|t|)
    CHECK(student_t_two_sided(1.0, 1) ==
          doctest::Approx(1.0 - 2.0 / M_PI * std::atan(1.0)).epsilon(1e-10));
}

TEST_CASE("weighted kappa exact cases") {
    // identical ratings
    std::vector<int> a{1, 2, 3, 4, 5, 3, 2, 1, 4, 5};
    auto same = weighted_kappa(a, a);
    CHECK(same.kappa == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(same.band == "excellent");

    // fixed 4x4 contingency table vs an exhaustive-summation oracle
    // counts[i][j]: rater A category i, rater B category j
    const int counts[4][4] = {{12, 3, 1, 0}, {4, 10, 2, 1}, {0, 5, 8, 3}, {1, 0, 4, 9}};
    std::vector<int> ra, rb;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int c = 0; c < counts[i][j]; ++c) {
                ra.push_back(i);
                rb.push_back(j);
            }
    const auto res = weighted_kappa(ra, rb);
    // oracle: direct double sums with distance weights w = |i-j|/(k-1)
    double n = 0;
    double row[4] = {0, 0, 0, 0}, col[4] = {0, 0, 0, 0};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            n += counts[i][j];
            row[i] += counts[i][j];
            col[j] += counts[i][j];
        }
    double wo = 0, we = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const double w = std::abs(i - j) / 3.0;
            wo += w * counts[i][j];
            we += w * row[i] * col[j] / n;
        }
    const double oracle = 1.0 - wo / we;
    CHECK(res.kappa == doctest::Approx(oracle).epsilon(1e-12));

    // symmetry in rater order
    const auto swapped = weighted_kappa(rb, ra);
    CHECK(swapped.kappa == doctest::Approx(res.kappa).epsilon(1e-12));

    // invariance under a common order-preserving relabeling
    auto remap = [](const std::vector<int>& v) {
        std::vector<int> out;
        for (int x : v) out.push_back(x * x * 3 + 10);  // strictly increasing on {0..3}
        return out;
    };
    const auto relabeled = weighted_kappa(remap(ra), remap(rb));
    CHECK(relabeled.kappa == doctest::Approx(res.kappa).epsilon(1e-12));

    CHECK_THROWS_AS(weighted_kappa(std::vector<int>{1, 1}, std::vector<int>{1, 1}), ParamError);
}

TEST_CASE("weighted kappa of independent raters is near zero") {
    Rng rng(123);
    std::vector<int> a(10000), b(10000);
    for (auto& v : a) v = 1 + int(rng.below(5));
    for (auto& v : b) v = 1 + int(rng.below(5));
    const auto res = weighted_kappa(a, b);
    CHECK(std::abs(res.kappa) < 0.05);
    CHECK(res.p_value > 1e-6);  // should not be wildly significant
}

TEST_CASE("kendall w exact cases with tie correction") {
    // identical rankings, no ties -> W = 1
    std::vector<std::vector<double>> perfect;
    for (int i = 0; i < 6; ++i) perfect.push_back({double(i), double(i), double(i)});
    auto res = kendall_w(perfect);
    CHECK(res.w == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.band == "excellent");

    // two reversed readers -> W = 0
    std::vector<std::vector<double>> reversed;
    for (int i = 0; i < 20; ++i) reversed.push_back({double(i), double(20 - i)});
    CHECK(kendall_w(reversed).w == doctest::Approx(0.0).epsilon(1e-12));

    // fixed 5-item x 3-reader table with ties vs brute-force oracle
    const std::vector<std::vector<double>> table{
        {2, 1, 2}, {2, 3, 1}, {4, 3, 3}, {1, 1, 2}, {5, 4, 3}};
    const auto r = kendall_w(table);
    // oracle: mid-ranks per reader, straight summation
    auto rank_col = [&](int j) {
        std::vector<double> col, ranks(5);
        for (int i = 0; i < 5; ++i) col.push_back(table[i][j]);
        for (int i = 0; i < 5; ++i) {
            double less = 0, equal = 0;
            for (int k = 0; k < 5; ++k) {
                if (col[k] < col[i]) ++less;
                if (col[k] == col[i]) ++equal;
            }
            ranks[i] = less + 0.5 * (equal + 1);
        }
        return ranks;
    };
    double rank_sum[5] = {0, 0, 0, 0, 0};
    double tie = 0;
    for (int j = 0; j < 3; ++j) {
        auto rk = rank_col(j);
        for (int i = 0; i < 5; ++i) rank_sum[i] += rk[i];
        // tie term for this reader
        std::vector<double> col;
        for (int i = 0; i < 5; ++i) col.push_back(table[i][j]);
        std::sort(col.begin(), col.end());
        for (size_t i = 0; i < col.size();) {
            size_t k = i;
            while (k + 1 < col.size() && col[k + 1] == col[i]) ++k;
            const double t = double(k - i + 1);
            tie += t * t * t - t;
            i = k + 1;
        }
    }
    double s = 0;
    const double mean = 3.0 * 6.0 / 2.0;
    for (int i = 0; i < 5; ++i) s += (rank_sum[i] - mean) * (rank_sum[i] - mean);
    const double oracle = 12.0 * s / (9.0 * (125.0 - 5.0) - 3.0 * tie);
    CHECK(r.w == doctest::Approx(oracle).epsilon(1e-12));

    // invariance under a common monotone transform of all scores
    auto transformed = table;
    for (auto& row : transformed)
        for (auto& v : row) v = std::exp(v);
    CHECK(kendall_w(transformed).w == doctest::Approx(r.w).epsilon(1e-12));

    // all-constant ratings undefined
    std::vector<std::vector<double>> flat(5, std::vector<double>{2, 2});
    CHECK_THROWS_AS(kendall_w(flat), ParamError);
}

TEST_CASE("non-inferiority sample size") {
    SampleSizeInputs in;
    in.alpha = 0.025;
    in.power = 0.9;
    in.sigma_d = 0.23;
    in.delta = 0.05;
    in.mu_d = 0.02;
    in.dropout_fraction = 0.0;
    const auto r = noninferiority_sample_size(in);
    // formula as printed: ceil(((1.959964+1.281552)*0.23/0.07)^2) = ceil(113.44) = 114
    CHECK(r.n_exact == doctest::Approx(113.44).epsilon(1e-3));
    CHECK(r.n_required == 114);

    // dropout inflation
    in.dropout_fraction = 0.2;
    CHECK(noninferiority_sample_size(in).n_enrolled == 143);  // ceil(114/0.8)

    // doubling sigma quadruples the pre-ceiling size exactly
    SampleSizeInputs dbl = in;
    dbl.sigma_d *= 2.0;
    CHECK(noninferiority_sample_size(dbl).n_exact ==
          doctest::Approx(4.0 * r.n_exact).epsilon(1e-12));

    // sigma -> 0 floors at 1
    SampleSizeInputs tiny = in;
    tiny.sigma_d = 1e-12;
    CHECK(noninferiority_sample_size(tiny).n_required == 1);

    SampleSizeInputs bad = in;
    bad.dropout_fraction = 1.0;
    CHECK_THROWS_AS(noninferiority_sample_size(bad), ParamError);
}

TEST_CASE("turing confusion") {
    std::vector<int> truth{1, 0, 1, 0, 1, 1, 0, 0};
    auto perfect = turing_confusion(truth, truth);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.kappa == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<int> inverted;
    for (int v : truth) inverted.push_back(1 - v);
    CHECK(turing_confusion(truth, inverted).accuracy == 0.0);

    Rng rng(7);
    std::vector<int> t(10000), g(10000);
    for (auto& v : t) v = int(rng.below(2));
    for (auto& v : g) v = int(rng.below(2));
    const auto coin = turing_confusion(t, g);
    CHECK(coin.accuracy > 0.48);
    CHECK(coin.accuracy < 0.52);
}

TEST_CASE("paired t test sanity") {
    std::vector<double> a{3.9, 4.1, 3.8, 4.0, 4.2, 3.95, 4.05, 3.85};
    std::vector<double> b = a;
    for (auto& v : b) v -= 0.5;  // strong paired difference
    const auto strong = paired_t_test(a, b);
    CHECK(strong.mean_diff == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(strong.p_two_sided < 1e-6);

    Rng rng(3);
    std::vector<double> x(200), y(200);
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.normal();
        y[i] = x[i] + 0.01 * rng.normal();  // no systematic shift
    }
    CHECK(paired_t_test(x, y).p_two_sided > 0.01);
}

TEST_CASE("rating csv round trip") {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "ratings_test.csv";
    {
        std::ofstream out(path);
        out << "item,reader_a,reader_b,reader_c\n";
        out << "1,4,5,4\n2,3,3,4\n3,5,5,5\n4,2,1,2\n";
    }
    const auto t = load_rating_csv(path.string());
    CHECK(t.reader_names == std::vector<std::string>{"reader_a", "reader_b", "reader_c"});
    REQUIRE(t.rows.size() == 4);
    CHECK(t.column_int(0) == std::vector<int>{4, 3, 5, 2});
    CHECK(t.column_int(2) == std::vector<int>{4, 4, 5, 2});
    fs::remove(path);
}
