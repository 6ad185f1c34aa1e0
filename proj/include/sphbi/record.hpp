#pragma once

#include <cstdint>
#include <optional>

#include "sphbi/byte_codec.hpp"
#include "sphbi/core.hpp"

namespace sphbi {

/// One packet as stored on disk: its 30 layout bytes, label and capture time.
/// `label` is empty for records that have been extracted but not labelled.
struct LabeledRecord {
    ByteVector30 bytes{};
    std::optional<TrafficClass> label;
    std::uint64_t timestamp_us = 0;

    TrafficClass cls() const {
        if (!label) throw ContractError("record has no label");
        return *label;
    }
    BinaryLabel binary() const { return to_binary(cls()); }

    friend bool operator==(const LabeledRecord&, const LabeledRecord&) = default;
};

}  // namespace sphbi
