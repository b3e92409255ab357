#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace marketrank {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Child seed for (stream, index) under a master seed. Streams keep e.g. intent
// draws and retrieval noise from sharing a sequence.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

// Counter-based uniform in [0, 1): a pure function of its key, so two policy
// arms can consume the same draw for the same (session, query, item) event.
double keyed_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                     std::uint64_t d);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is visited
// exactly once; callers write results into index-addressed slots.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace marketrank
