#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "regbn/binary_io.hpp"

using namespace regbn;

TEST(BinaryIo, RoundTripsScalarsArraysAndMatrices) {
  BinaryWriter w("TEST", 3);
  w.u8(200);
  w.u16(65000);
  w.u64(0x0123456789abcdefull);
  w.f64(-0.0);
  w.f64(std::numeric_limits<double>::infinity());
  const std::vector<double> v{1.5, -2.25, 1e-300};
  w.f64s(v);
  const Matrix m{{1, 2, 3}, {4, 5, 6}};
  w.matrix(m);
  w.matrix(Matrix());
  const std::string bytes = w.take();

  BinaryReader r(bytes, "TEST");
  EXPECT_EQ(r.version(), 3);
  EXPECT_EQ(r.u8(), 200);
  EXPECT_EQ(r.u16(), 65000);
  EXPECT_EQ(r.u64(), 0x0123456789abcdefull);
  const double z = r.f64();
  EXPECT_EQ(z, 0.0);
  EXPECT_TRUE(std::signbit(z));
  EXPECT_TRUE(std::isinf(r.f64()));
  EXPECT_EQ(r.f64s(), v);
  EXPECT_EQ(r.matrix(), m);
  EXPECT_EQ(r.matrix(), Matrix());
  EXPECT_TRUE(r.at_end());
  EXPECT_NO_THROW(r.expect_end());
}

TEST(BinaryIo, LittleEndianLayout) {
  BinaryWriter w("ABCD", 0x0102);
  w.u64(0x1122334455667788ull);
  const std::string b = w.take();
  ASSERT_EQ(b.size(), 14u);
  EXPECT_EQ(b.substr(0, 4), "ABCD");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 0x02);
  EXPECT_EQ(static_cast<unsigned char>(b[5]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(b[6]), 0x88);
  EXPECT_EQ(static_cast<unsigned char>(b[13]), 0x11);
}

TEST(BinaryIo, RejectsBadInput) {
  EXPECT_THROW(BinaryReader("", "TEST"), FormatError);
  EXPECT_THROW(BinaryReader("TES", "TEST"), FormatError);
  EXPECT_THROW(BinaryReader("NOPE\x01\x00", "TEST"), FormatError);

  BinaryWriter w("TEST", 1);
  w.u64(1);
  const std::string bytes = w.take();
  BinaryReader r(bytes, "TEST");
  EXPECT_THROW(r.expect_end(), FormatError);
  r.u64();
  EXPECT_THROW(r.u8(), FormatError);
}

TEST(BinaryIo, HugeLengthPrefixesFailCleanly) {
  for (std::uint64_t n : {std::uint64_t{1} << 61, ~std::uint64_t{0}, std::uint64_t{3}}) {
    BinaryWriter w("TEST", 1);
    w.u64(n);
    w.f64(1.0);
    const std::string bytes = w.take();
    BinaryReader r(bytes, "TEST");
    EXPECT_THROW(r.f64s(), FormatError) << n;
  }
  BinaryWriter w("TEST", 1);
  w.u64(~std::uint64_t{0});
  w.u64(~std::uint64_t{0});
  const std::string bytes = w.take();
  BinaryReader r(bytes, "TEST");
  EXPECT_THROW(r.matrix(), FormatError);
}
