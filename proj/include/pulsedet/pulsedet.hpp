#pragma once

#include "analysis.hpp"
#include "config.hpp"
#include "detector.hpp"
#include "error.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "search.hpp"
#include "signalgen.hpp"
#include "stats.hpp"
#include "svm.hpp"
#include "version.hpp"
#include "wavelet.hpp"
