#pragma once

#include "mcsd/ops_conv.hpp"
#include "mcsd/ops_core.hpp"
#include "mcsd/ops_matmul.hpp"
