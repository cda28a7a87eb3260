#pragma once

#include "gridplan/network.hpp"

#include <cstdint>
#include <string>

namespace gridplan {

struct FixtureSpec {
    int sub_areas = 1;
    int nodes_per_area = 4;
    int backbone_nodes = 3;
    double density = 0.34;  // ties beyond the spanning tree, fraction of area size
    std::string catalog_preset = "standard";
    double saidi_headroom = 1.15;
    std::uint64_t seed = 1;
};

// Deterministic generation: the same spec yields a byte-identical file.
Network gen_fixture(const FixtureSpec& spec);

Network preset_t1();
Network preset_t2();

// Fixed-size sub-areas on a minimal backbone, for the model-size sweep.
Network scaling_fixture(int sub_areas);

void write_network_file(const Network& net, const std::string& path);

}  // namespace gridplan
