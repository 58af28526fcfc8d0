#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "hyps/matrix.hpp"
#include "hyps/rng.hpp"
#include "oracles.hpp"

using hyps::Matrix;
using Catch::Matchers::ContainsSubstring;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, hyps::Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

} // namespace

TEST_CASE("matrix construction and element access") {
    Matrix z(2, 3);
    REQUIRE(z.rows() == 2);
    REQUIRE(z.cols() == 3);
    for (std::size_t i = 0; i < z.size(); ++i) REQUIRE(z.data()[i] == 0.0);

    Matrix f(2, 2, 1.5);
    REQUIRE(f(0, 0) == 1.5);
    REQUIRE(f(1, 1) == 1.5);

    Matrix m{{1.0, 2.0}, {3.0, 4.0}};
    REQUIRE(m(0, 1) == 2.0);
    REQUIRE(m(1, 0) == 3.0);

    REQUIRE(Matrix::identity(3)(2, 2) == 1.0);
    REQUIRE(Matrix::identity(3)(0, 2) == 0.0);
    REQUIRE(Matrix::diag({3.0, 2.0})(1, 1) == 2.0);
}

TEST_CASE("ragged initializer list is rejected") {
    REQUIRE_THROWS_AS((Matrix{{1.0, 2.0}, {3.0}}), hyps::ShapeError);
}

TEST_CASE("matmul hand-checked example") {
    Matrix a{{1.0, 2.0}, {3.0, 4.0}};
    Matrix b{{5.0}, {6.0}};
    Matrix c = hyps::matmul(a, b);
    REQUIRE(c.rows() == 2);
    REQUIRE(c.cols() == 1);
    REQUIRE(c(0, 0) == 17.0);
    REQUIRE(c(1, 0) == 39.0);
}

TEST_CASE("matmul identity and zero") {
    hyps::Rng rng(11);
    Matrix a = random_matrix(4, 6, rng);
    REQUIRE(hyps::max_abs_diff(hyps::matmul(Matrix::identity(4), a), a) == 0.0);
    REQUIRE(hyps::max_abs_diff(hyps::matmul(a, Matrix::identity(6)), a) == 0.0);
    REQUIRE(hyps::max_abs(hyps::matmul(a, Matrix(6, 3))) == 0.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Matrix a(2, 3);
    Matrix b(4, 2);
    REQUIRE_THROWS_MATCHES(hyps::matmul(a, b), hyps::ShapeError,
                           Catch::Matchers::MessageMatches(ContainsSubstring("2x3") &&
                                                           ContainsSubstring("4x2")));
}

TEST_CASE("matmul is associative to rounding") {
    hyps::Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix a = random_matrix(5, 4, rng);
        Matrix b = random_matrix(4, 6, rng);
        Matrix c = random_matrix(6, 3, rng);
        Matrix lhs = hyps::matmul(hyps::matmul(a, b), c);
        Matrix rhs = hyps::matmul(a, hyps::matmul(b, c));
        REQUIRE(hyps::max_abs_diff(lhs, rhs) <= 1e-12);
    }
}

TEST_CASE("elementwise operations") {
    Matrix a{{1.0, -2.0}, {3.0, 0.5}};
    Matrix b{{0.5, 4.0}, {-1.0, 2.0}};

    Matrix sum = a + b;
    REQUIRE(sum(0, 0) == 1.5);
    REQUIRE(sum(1, 0) == 2.0);

    Matrix diff = a - b;
    REQUIRE(diff(0, 1) == -6.0);

    Matrix scaled = 2.0 * a;
    REQUIRE(scaled(1, 0) == 6.0);

    Matrix had = hyps::hadamard(a, b);
    REQUIRE(had(0, 0) == 0.5);
    REQUIRE(had(0, 1) == -8.0);

    REQUIRE_THROWS_AS(a + Matrix(3, 2), hyps::ShapeError);
    REQUIRE_THROWS_AS(hyps::hadamard(a, Matrix(2, 3)), hyps::ShapeError);
}

TEST_CASE("transpose") {
    Matrix a{{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}};
    Matrix t = hyps::transpose(a);
    REQUIRE(t.rows() == 3);
    REQUIRE(t.cols() == 2);
    REQUIRE(t(0, 1) == 4.0);
    REQUIRE(t(2, 0) == 3.0);
    REQUIRE(hyps::transpose(t) == a);
}

TEST_CASE("relu clamps negatives") {
    Matrix a{{-1.0, 2.0}, {0.0, -3.0}};
    Matrix r = hyps::relu(a);
    REQUIRE(r(0, 0) == 0.0);
    REQUIRE(r(0, 1) == 2.0);
    REQUIRE(r(1, 0) == 0.0);
    REQUIRE(r(1, 1) == 0.0);
}

TEST_CASE("reductions and norms") {
    Matrix a{{3.0, -4.0}, {0.0, 1.0}};
    REQUIRE(hyps::max_abs(a) == 4.0);
    REQUIRE(hyps::sum_all(a) == 0.0);
    REQUIRE(hyps::frobenius_norm(a) == Catch::Approx(std::sqrt(26.0)).epsilon(1e-15));
    Matrix b = a;
    b(1, 1) = 1.25;
    REQUIRE(hyps::max_abs_diff(a, b) == 0.25);
}

TEST_CASE("all_finite flags nan and inf") {
    Matrix a(2, 2, 1.0);
    REQUIRE(a.all_finite());
    a(0, 1) = std::nan("");
    REQUIRE_FALSE(a.all_finite());
    a(0, 1) = std::numeric_limits<double>::infinity();
    REQUIRE_FALSE(a.all_finite());
}

TEST_CASE("kaiming init statistics and determinism") {
    // Same seed, same shape: bit-identical.
    hyps::Rng r1(7), r2(7);
    Matrix a = hyps::kaiming_init(3, 4, r1);
    Matrix b = hyps::kaiming_init(3, 4, r2);
    REQUIRE(a == b);

    // Large sample: std within 5% of sqrt(2 / fan_in), fan_in = cols.
    hyps::Rng r3(123);
    Matrix big = hyps::kaiming_init(1000, 50, r3);
    const double want = std::sqrt(2.0 / 50.0);
    const double got = oracles::sample_stddev(big);
    REQUIRE(std::fabs(got - want) <= 0.05 * want);

    hyps::Rng r4(5);
    Matrix tiny = hyps::kaiming_init(1, 1, r4);
    REQUIRE(std::isfinite(tiny(0, 0)));
}

TEST_CASE("text fixture round trip") {
    hyps::Rng rng(99);
    Matrix a = random_matrix(3, 5, rng);
    a(0, 0) = 1.0 / 3.0;
    a(2, 4) = -1e-17;

    std::stringstream ss;
    hyps::write_matrix_text(a, ss);
    Matrix back = hyps::read_matrix_text(ss);
    REQUIRE(back == a);
}

TEST_CASE("text fixture header is parsed") {
    std::stringstream ss("2 2\n1 2\n3 4\n");
    Matrix m = hyps::read_matrix_text(ss);
    REQUIRE(m(0, 0) == 1.0);
    REQUIRE(m(1, 1) == 4.0);
}

TEST_CASE("malformed text fixtures raise format errors") {
    std::stringstream missing_header("not numbers\n");
    REQUIRE_THROWS_AS(hyps::read_matrix_text(missing_header), hyps::FormatError);

    std::stringstream truncated("2 3\n1 2 3\n4 5\n");
    REQUIRE_THROWS_AS(hyps::read_matrix_text(truncated), hyps::FormatError);

    std::stringstream bad_value("1 2\n1 spam\n");
    REQUIRE_THROWS_AS(hyps::read_matrix_text(bad_value), hyps::FormatError);

    REQUIRE_THROWS_AS(hyps::read_matrix_text_file("/nonexistent/matrix.txt"),
                      hyps::FormatError);
}

TEST_CASE("shape_str formats as rows x cols") {
    REQUIRE(Matrix(2, 3).shape_str() == "2x3");
}
