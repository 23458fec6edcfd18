#pragma once

#include <string>
#include <vector>

namespace laneintent::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime error: I/O, malformed data
inline constexpr int kExitUsage = 2;    // bad flags, bad config, unknown algorithm

/// Entry point shared by the executable and the tests. argv[0] is ignored.
int run(const std::vector<std::string>& argv);

}  // namespace laneintent::cli
