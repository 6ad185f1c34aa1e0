#include <gtest/gtest.h>

#include <random>

#include "sphbi/byte_codec.hpp"
#include "test_util.hpp"

using namespace sphbi;
using testutil::Bytes;

namespace {

// Base-2 expansion by repeated division, most significant digit first.
std::vector<std::uint8_t> binary_digits(unsigned v) {
    std::vector<std::uint8_t> d(8);
    for (int i = 7; i >= 0; --i) {
        d[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v % 2);
        v /= 2;
    }
    return d;
}

ByteVector30 random_vector(std::mt19937_64& rng) {
    ByteVector30 v{};
    for (auto& b : v) b = static_cast<std::uint8_t>(rng());
    return v;
}

PacketFields dissected(const Bytes& frame) {
    auto r = dissect(RawPacket{0, frame, 0});
    if (!std::holds_alternative<PacketFields>(r)) {
        ADD_FAILURE() << "frame was skipped";
        return {};
    }
    return std::get<PacketFields>(r);
}

}  // namespace

TEST(Approaches, ShapesAndRanges) {
    struct Row {
        const char* name;
        std::size_t first, count, h, w;
    };
    const Row rows[] = {{"1", 0, 18, 12, 12}, {"2", 0, 26, 16, 13}, {"2b", 0, 30, 16, 15},
                        {"3", 18, 8, 8, 8},   {"3b", 18, 12, 12, 8}};
    for (const auto& r : rows) {
        const auto id = parse_approach(r.name);
        ASSERT_TRUE(id) << r.name;
        const auto& a = approach(*id);
        EXPECT_EQ(a.first, r.first);
        EXPECT_EQ(a.count, r.count);
        EXPECT_EQ(a.height, r.h);
        EXPECT_EQ(a.width, r.w);
        EXPECT_EQ(a.height * a.width, 8 * a.count);
    }
    EXPECT_FALSE(parse_approach("4"));
}

TEST(Reconstruct, HeaderLengthTwentyBecomesIhlFive) {
    DecodedFields d;
    d.ip_hdr_len = 20;
    EXPECT_EQ(reconstruct(from_decoded(d))[0], 0x45);
}

TEST(Reconstruct, DecodedFlagsFoldBackToOctets) {
    DecodedFields d;
    d.ip_flags = 2;  // DF
    d.ip_frag_offset = 0;
    d.tcp_hdr_len = 20;
    d.tcp_flags = 0x018;
    const auto v = reconstruct(from_decoded(d));
    EXPECT_EQ(v[6], 0x40);
    EXPECT_EQ(v[7], 0x00);
    EXPECT_EQ(v[14], 0x50);
    EXPECT_EQ(v[15], 0x18);
}

TEST(Reconstruct, NetworkByteOrderSplits) {
    PacketFields f;
    f.ip_total_len = 260;
    f.mbap_transaction_id = 0;
    const auto v = reconstruct(f);
    EXPECT_EQ(v[2], 1);
    EXPECT_EQ(v[3], 4);
    EXPECT_EQ(v[18], 0);
    EXPECT_EQ(v[19], 0);
    EXPECT_EQ(v[9], 6);
}

TEST(Reconstruct, PduIsPaddedOrTruncatedToFour) {
    PacketFields f;
    f.pdu_bytes = {0xAA};
    auto v = reconstruct(f);
    EXPECT_EQ(v[26], 0xAA);
    EXPECT_EQ(v[27], 0);
    EXPECT_EQ(v[29], 0);
    f.pdu_bytes = {1, 2, 3, 4, 5, 6};
    v = reconstruct(f);
    EXPECT_EQ(v[26], 1);
    EXPECT_EQ(v[29], 4);
}

TEST(Reconstruct, KnownFrameLayout) {
    const auto v = reconstruct(dissected(testutil::read_request_frame()));
    const ByteVector30 expect = {0x45, 0x00, 0x00, 0x34, 0x12, 0x34, 0x40, 0x00, 0x40, 0x06,
                                 0xC0, 0x00, 0x01, 0xF6, 0x50, 0x18, 0xFA, 0xF0, 0x00, 0x01,
                                 0x00, 0x00, 0x00, 0x06, 0x01, 0x03, 0x00, 0x00, 0x00, 0x0A};
    EXPECT_EQ(v, expect);
}

TEST(Select, ContiguousSubsets) {
    ByteVector30 v{};
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint8_t>(i + 100);
    const auto s3 = select(v, ApproachId::A3);
    ASSERT_EQ(s3.size(), 8u);
    EXPECT_EQ(s3[0], v[18]);  // transaction id, high byte
    EXPECT_EQ(s3[7], v[25]);
    const auto s2b = select(v, ApproachId::A2b);
    EXPECT_TRUE(std::equal(s2b.begin(), s2b.end(), v.begin(), v.end()));
    const auto s1 = select(v, ApproachId::A1);
    ASSERT_EQ(s1.size(), 18u);
    EXPECT_TRUE(std::equal(s1.begin(), s1.end(), v.begin()));
    EXPECT_EQ(select(v, ApproachId::A2).size(), 26u);
    const auto s3b = select(v, ApproachId::A3b);
    ASSERT_EQ(s3b.size(), 12u);
    EXPECT_EQ(s3b.back(), v[29]);
}

TEST(Encode, AllZeroAndAllOne) {
    const Bytes zeros(18, 0), ones(18, 0xFF);
    const auto z = encode(zeros, ApproachId::A1);
    EXPECT_EQ(z.height, 12u);
    EXPECT_EQ(z.width, 12u);
    EXPECT_EQ(z.bits, std::vector<std::uint8_t>(144, 0));
    EXPECT_EQ(encode(ones, ApproachId::A1).bits, std::vector<std::uint8_t>(144, 1));
}

TEST(Encode, FirstByteBitsMsbFirst) {
    Bytes b(30, 0);
    b[0] = 0x45;
    const auto img = encode(b, ApproachId::A2b);
    const auto want = binary_digits(0x45);
    EXPECT_EQ(want, (std::vector<std::uint8_t>{0, 1, 0, 0, 0, 1, 0, 1}));
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(img.bits[i], want[i]) << i;
}

TEST(Encode, RowMajorReshape) {
    // 8x8: each row is exactly one byte.
    Bytes b = {0x80, 0x01, 0, 0, 0, 0, 0, 0xFF};
    const auto img = encode(b, ApproachId::A3);
    EXPECT_EQ(img.at(0, 0), 1);
    EXPECT_EQ(img.at(0, 1), 0);
    EXPECT_EQ(img.at(1, 7), 1);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(img.at(7, c), 1);
    // 16x15: bit 15 (second byte MSB) starts row 1.
    Bytes c(30, 0);
    c[1] = 0x40;  // bit index 9
    const auto img2 = encode(c, ApproachId::A2b);
    EXPECT_EQ(img2.at(0, 9), 1);
    c[1] = 0x01;  // bit index 15
    EXPECT_EQ(encode(c, ApproachId::A2b).at(1, 0), 1);
}

TEST(Encode, LengthMismatchIsContractError) {
    EXPECT_THROW(encode(Bytes(17, 0), ApproachId::A1), ContractError);
}

TEST(Encode, RenderUsesHashForSetBits) {
    const auto img = encode(Bytes{0xF0, 0, 0, 0, 0, 0, 0, 0}, ApproachId::A3);
    EXPECT_EQ(render(img).substr(0, 9), "####....\n");
}

TEST(EncodeProperty, PackInvertsEncode) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 2000; ++i) {
        const auto v = random_vector(rng);
        for (const auto& a : kApproaches) {
            const auto sel = select(v, a);
            const auto img = encode(sel, a);
            const auto back = pack(img);
            ASSERT_TRUE(std::equal(back.begin(), back.end(), sel.begin(), sel.end()));
            std::vector<float> buf(a.height * a.width);
            encode_into<float>(v, a, buf);
            for (std::size_t k = 0; k < buf.size(); ++k) ASSERT_EQ(buf[k], float(img.bits[k]));
        }
    }
}

TEST(EncodeProperty, DeterministicForEqualFields) {
    const auto f = dissected(testutil::read_request_frame());
    const auto g = f;
    for (const auto& a : kApproaches) {
        EXPECT_EQ(encode(select(reconstruct(f), a), a), encode(select(reconstruct(g), a), a));
    }
}

TEST(EncodeProperty, RawSliceEqualsFieldReconstruction) {
    std::mt19937_64 rng(11);
    const std::uint8_t fcs[] = {1, 2, 3, 4, 5, 6, 8, 15, 16, 43, 0x83};
    std::size_t checked = 0;
    for (int i = 0; i < 3000; ++i) {
        testutil::FrameSpec s;
        s.dscp = rng() % 256;
        s.ip_id = rng() % 65536;
        s.flags_frag = (rng() % 2) ? 0x4000 : 0;
        s.ttl = 1 + rng() % 255;
        s.seq = static_cast<std::uint32_t>(rng());
        s.ack = static_cast<std::uint32_t>(rng());
        s.tcp_flags = rng() % 0x1000;
        s.window = rng() % 65536;
        if (rng() % 2) {
            s.src_port = 502;
            s.dst_port = 1024 + rng() % 60000;
        } else {
            s.src_port = 1024 + rng() % 60000;
        }
        if (rng() % 3 == 0) s.tcp_options = testutil::random_bytes(4 * (1 + rng() % 3), rng);
        const auto data = testutil::random_bytes(rng() % 12, rng);
        s.payload = testutil::adu(rng() % 65536, rng() % 256, fcs[rng() % std::size(fcs)], data, -1, rng() % 3);
        if (rng() % 4 == 0) {
            const auto extra = testutil::adu(rng() % 65536, 1, 3, {0, 0, 0, 1});
            s.payload.insert(s.payload.end(), extra.begin(), extra.end());
        }
        auto frame = testutil::frame(s);
        if (rng() % 2) frame.resize(frame.size() + rng() % 8, 0);
        const auto r = dissect(RawPacket{0, frame, 0});
        const auto raw = slice_raw_frame(frame);
        ASSERT_EQ(std::holds_alternative<PacketFields>(r), raw.has_value());
        if (!raw) continue;
        ASSERT_EQ(reconstruct(std::get<PacketFields>(r)), *raw) << "iteration " << i;
        ++checked;
    }
    EXPECT_GT(checked, 2500u);
}
