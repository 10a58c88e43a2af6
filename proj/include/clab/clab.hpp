#pragma once

#include "clab/analysis.hpp"
#include "clab/core.hpp"
#include "clab/error.hpp"
#include "clab/io.hpp"
#include "clab/losses.hpp"
#include "clab/matrix.hpp"
#include "clab/random.hpp"
#include "clab/synth.hpp"
#include "clab/trainer.hpp"
#include "clab/verify.hpp"
