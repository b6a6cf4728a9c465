#pragma once

#include "selfdeblur/autodiff.hpp"
#include "selfdeblur/fft.hpp"
#include "selfdeblur/generator.hpp"
#include "selfdeblur/image.hpp"
#include "selfdeblur/imgmath.hpp"
#include "selfdeblur/io.hpp"
#include "selfdeblur/kernel_solver.hpp"
#include "selfdeblur/metrics.hpp"
#include "selfdeblur/objective.hpp"
#include "selfdeblur/optimizer.hpp"
#include "selfdeblur/synth.hpp"
