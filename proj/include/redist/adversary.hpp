#pragma once

#include <vector>

#include "redist/features.hpp"
#include "redist/mechanism.hpp"
#include "redist/net.hpp"

namespace redist {

// Noise-to-profile generator: (n, 64, 64, 64, 64, n) with sigmoid output,
// so every generated profile lands in [0,1]^n.
struct Generator {
  Mlp net;
  int n = 0;
};

Generator make_generator(int n, RngStream& rng);

std::vector<TypeProfile> generate_batch(const Generator& gen, int batch_size,
                                        RngStream& rng);

// One Adam update of the generator against min-max spread of
// sum_i h(theta_{-i})/S(theta) over a fresh batch. h's parameters are read
// only; gradients flow through the two extreme samples. Returns the loss.
double adversary_step(Generator& gen, const Mlp& h_net, FeatureCombo combo,
                      int top_k, int batch_size, AdamState& opt,
                      RngStream& rng);

}  // namespace redist
