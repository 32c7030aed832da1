#pragma once

#include "leakscope/bitplane.hpp"
#include "leakscope/embedding.hpp"
#include "leakscope/error.hpp"
#include "leakscope/experiment.hpp"
#include "leakscope/histogram.hpp"
#include "leakscope/image.hpp"
#include "leakscope/image_io.hpp"
#include "leakscope/mine.hpp"
#include "leakscope/toml_subset.hpp"
#include "leakscope/version.hpp"
