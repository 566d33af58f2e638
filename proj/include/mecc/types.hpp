#pragma once

#include <cstdint>
#include <vector>

namespace mecc {

using TokenId = std::int32_t;
using Tokens = std::vector<TokenId>;

}  // namespace mecc
