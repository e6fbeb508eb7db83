#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <limits>

#include "egomg/checkpoint.hpp"
#include "egomg/io_util.hpp"
#include "egomg/matrix.hpp"

using namespace egomg;

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 6.02214076e23, 5e-324, std::nextafter(1.0, 2.0)}) {
    CHECK(parse_double(format_double(v)).value() == v);
  }
}

TEST_CASE("parse_int and parse_double reject trailing junk") {
  CHECK(parse_int("12").value() == 12);
  CHECK_FALSE(parse_int("12x"));
  CHECK_FALSE(parse_int(""));
  CHECK_FALSE(parse_double("1.5.2"));
  CHECK(parse_double("-0.25").value() == -0.25);
}

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("matmul variants agree with a naive triple loop") {
  Matrix a(3, 4), b(4, 2);
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] = 0.5 * static_cast<double>(i) - 2.0;
  for (std::size_t i = 0; i < b.size(); ++i) b.data[i] = std::sin(static_cast<double>(i));
  Matrix naive(3, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 4; ++k) naive(i, j) += a(i, k) * b(k, j);
  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.data[i] == doctest::Approx(naive.data[i]).epsilon(1e-14));

  Matrix at(4, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) at(k, i) = a(i, k);
  const Matrix c2 = matmul_tn(at, b);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c2.data[i] == doctest::Approx(naive.data[i]).epsilon(1e-14));

  Matrix bt(2, 4);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 2; ++j) bt(j, k) = b(k, j);
  const Matrix c3 = matmul_nt(a, bt);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c3.data[i] == doctest::Approx(naive.data[i]).epsilon(1e-14));
  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("csr multiply matches dense") {
  Matrix d(3, 3);
  d(0, 0) = 1;
  d(0, 2) = 0.5;
  d(2, 1) = 2;
  const CsrMatrix s = CsrMatrix::from_dense(d);
  CHECK(s.values.size() == 3);
  CHECK(s.to_dense() == d);
  CHECK(s.at(2, 1) == 2);
  CHECK(s.at(1, 1) == 0);
  Matrix x(3, 2);
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = static_cast<double>(i + 1);
  CHECK(s.multiply(x) == matmul(d, x));
  Matrix dt(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) dt(i, j) = d(j, i);
  CHECK(s.multiply_transposed(x) == matmul(dt, x));
}

TEST_CASE("all_finite spots NaN and Inf") {
  Matrix m(1, 2);
  CHECK(all_finite(m));
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(all_finite(m));
  m(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(all_finite(m));
}

TEST_CASE("checkpoint round trip is bit exact") {
  Checkpoint c;
  c.set("kind", "test");
  c.set("note", "a b");
  Matrix m(2, 3);
  m.data = {1.0, -0.0, 1e-300, 1.0 / 3.0, 4, std::numeric_limits<double>::denorm_min()};
  c.put("w", m);
  c.put("empty", Matrix(0, 4));
  const std::string bytes = serialize_checkpoint(c);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back == c);
  CHECK(std::signbit(back.tensor("w").data[1]));
  CHECK(serialize_checkpoint(back) == bytes);
}

TEST_CASE("checkpoint rejects corruption") {
  Checkpoint c;
  c.set("kind", "test");
  c.put("w", Matrix(2, 2, 1.5));
  std::string bytes = serialize_checkpoint(c);
  std::string flipped = bytes;
  flipped[bytes.find("tensor") + 20] ^= 0x01;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), ParseError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), ParseError);
  CHECK_THROWS_AS(deserialize_checkpoint("EGO-OMG-CKPT v9\n"), ParseError);
}
