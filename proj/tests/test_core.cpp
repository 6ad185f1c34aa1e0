#include <gtest/gtest.h>

#include <vector>

#include "sphbi/core.hpp"

using namespace sphbi;

TEST(Classes, EnumValuesAreTheFileEncoding) {
    EXPECT_EQ(index_of(TrafficClass::Normal), 0u);
    EXPECT_EQ(index_of(TrafficClass::BruteForce), 1u);
    EXPECT_EQ(index_of(TrafficClass::QueryFlooding), 2u);
    EXPECT_EQ(index_of(TrafficClass::Replay), 3u);
    EXPECT_EQ(index_of(TrafficClass::FrameStacking), 4u);
    EXPECT_EQ(index_of(TrafficClass::PayloadInjection), 5u);
    EXPECT_EQ(index_of(TrafficClass::Recon), 6u);
    EXPECT_EQ(index_of(TrafficClass::FDI), 7u);
    EXPECT_EQ(index_of(TrafficClass::LengthManip), 8u);
    for (std::size_t i = 0; i < kNumClasses; ++i) EXPECT_EQ(index_of(kAllClasses[i]), i);
}

TEST(Classes, BinaryIsAttackExactlyWhenNotNormal) {
    for (auto c : kAllClasses) {
        EXPECT_EQ(to_binary(c) == BinaryLabel::Attack, c != TrafficClass::Normal) << class_name(c);
    }
}

TEST(Classes, ParseAcceptsNamesAndSpellings) {
    for (auto c : kAllClasses) EXPECT_EQ(parse_class(class_name(c)), c);
    EXPECT_EQ(parse_class("brute force"), TrafficClass::BruteForce);
    EXPECT_EQ(parse_class("query_flooding"), TrafficClass::QueryFlooding);
    EXPECT_EQ(parse_class("Reconnaissance"), TrafficClass::Recon);
    EXPECT_EQ(parse_class("false data injection"), TrafficClass::FDI);
    EXPECT_EQ(parse_class("length-manipulation"), TrafficClass::LengthManip);
    EXPECT_EQ(parse_class("payload_inj"), TrafficClass::PayloadInjection);
    EXPECT_FALSE(parse_class("DelayResponse"));
    EXPECT_FALSE(parse_class(""));
}

TEST(Tokens, NormalizeKeepsLowercaseAlphanumerics) {
    EXPECT_EQ(normalize_token("Brute_Force 2"), "bruteforce2");
    EXPECT_EQ(normalize_token("--"), "");
}

TEST(Bytes, Fnv1aKnownVectors) {
    EXPECT_EQ(bytes::fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(bytes::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(bytes::fnv1a("foobar"), 0x85944171f73967e8ULL);
    EXPECT_EQ(bytes::hex64(0x85944171f73967e8ULL), "85944171f73967e8");
    EXPECT_EQ(bytes::hex64(1), "0000000000000001");
}

TEST(Bytes, Fnv1aChains) {
    EXPECT_EQ(bytes::fnv1a("bar", bytes::fnv1a("foo")), bytes::fnv1a("foobar"));
}

TEST(Bytes, EndianHelpers) {
    std::vector<std::uint8_t> b;
    bytes::put_be16(b, 0x0104);
    bytes::put_be32(b, 0xdeadbeef);
    bytes::put_le(b, std::uint64_t{0x0102030405060708ULL});
    ASSERT_EQ(b.size(), 14u);
    EXPECT_EQ(b[0], 1);
    EXPECT_EQ(b[1], 4);
    EXPECT_EQ(bytes::be16(b, 0), 260);
    EXPECT_EQ(bytes::be32(b, 2), 0xdeadbeefu);
    EXPECT_EQ(b[6], 0x08);
    EXPECT_EQ(bytes::get_le<std::uint64_t>(b, 6), 0x0102030405060708ULL);
    EXPECT_EQ(bytes::get_le<std::uint16_t>(b, 6), 0x0708);
}
