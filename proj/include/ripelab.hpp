#pragma once

#include "ripelab/albedo.hpp"
#include "ripelab/calib.hpp"
#include "ripelab/embed.hpp"
#include "ripelab/error.hpp"
#include "ripelab/hash.hpp"
#include "ripelab/image_io.hpp"
#include "ripelab/masks.hpp"
#include "ripelab/model.hpp"
#include "ripelab/pipeline.hpp"
#include "ripelab/raster.hpp"
#include "ripelab/register.hpp"
#include "ripelab/report.hpp"
#include "ripelab/stats.hpp"
#include "ripelab/synth.hpp"
#include "ripelab/track.hpp"
