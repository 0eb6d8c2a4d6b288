#pragma once

#include "vbmix/errors.hpp"
#include "vbmix/numerics.hpp"
#include "vbmix/random.hpp"
#include "vbmix/family.hpp"
#include "vbmix/mixture.hpp"
#include "vbmix/vb.hpp"
#include "vbmix/selection.hpp"
#include "vbmix/transport.hpp"
#include "vbmix/metrics.hpp"
#include "vbmix/evidence.hpp"
#include "vbmix/io.hpp"
#include "vbmix/svg.hpp"
#include "vbmix/parallel.hpp"
#include "vbmix/experiment.hpp"
