// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "eva/kernels.hpp"

namespace eva::kernels::detail {

// Each returns nullptr when the backend was not compiled in.
const KernelTable* avx2_table();
const KernelTable* neon_table();

}  // namespace eva::kernels::detail
