// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_RECORDS_HPP
#define HALOW_RECORDS_HPP

#include <cstdint>
#include <vector>

#include "halow/channel.hpp"

namespace halow {

/// One detection training/evaluation example: a block of B amplitude
/// samples tagged with the start instant, or -1 for no start in block.
struct DetectionRecord {
    std::vector<float> block;   // |y|, length B
    float label = -1.0f;        // tau_S in [0, B-1], or -1
    float snr_db = 0.0f;
    std::uint64_t seed = 0;
    ChannelKind channel = ChannelKind::awgn_only;
};

/// One CFO example: the 160 STF phase samples tagged with the offset.
struct CfoRecord {
    std::vector<float> phases;  // angle(y_STF) in (-pi, pi], length 160
    float label_hz = 0.0f;
    float snr_db = 0.0f;
    std::uint64_t seed = 0;
    ChannelKind channel = ChannelKind::awgn_only;
};

}  // namespace halow

#endif
