#pragma once

#include "swan/angle.hpp"
#include "swan/cube.hpp"
#include "swan/datagen.hpp"
#include "swan/error.hpp"
#include "swan/io.hpp"
#include "swan/log.hpp"
#include "swan/matrix.hpp"
#include "swan/metrics.hpp"
#include "swan/model.hpp"
#include "swan/ndcore.hpp"
#include "swan/rng.hpp"
#include "swan/unmixer.hpp"
#include "swan/wavelet.hpp"
