#pragma once

#include "vidtext/autodiff.hpp"
#include "vidtext/cli.hpp"
#include "vidtext/common.hpp"
#include "vidtext/corpus.hpp"
#include "vidtext/encoders.hpp"
#include "vidtext/evaluation.hpp"
#include "vidtext/fusion.hpp"
#include "vidtext/manifest.hpp"
#include "vidtext/model.hpp"
#include "vidtext/optimizer.hpp"
#include "vidtext/rng.hpp"
#include "vidtext/stats.hpp"
#include "vidtext/synthetic.hpp"
#include "vidtext/textnorm.hpp"
#include "vidtext/training.hpp"
