// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <gspop/camera.hpp>
#include <gspop/core.hpp>
#include <gspop/image_io.hpp>
#include <gspop/metrics.hpp>
#include <gspop/model.hpp>
#include <gspop/oracle.hpp>
#include <gspop/ply.hpp>
#include <gspop/prune.hpp>
#include <gspop/quant.hpp>
#include <gspop/raster.hpp>
#include <gspop/synth.hpp>

namespace gspop {
inline constexpr const char* kVersion = "0.1.0";
}
