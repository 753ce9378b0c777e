#pragma once

// Umbrella header.

#include "introspect/active_learning.hpp"
#include "introspect/checkpoint.hpp"
#include "introspect/corruptions.hpp"
#include "introspect/data.hpp"
#include "introspect/error.hpp"
#include "introspect/evaluation.hpp"
#include "introspect/features.hpp"
#include "introspect/harness.hpp"
#include "introspect/introspection.hpp"
#include "introspect/io.hpp"
#include "introspect/metrics.hpp"
#include "introspect/nn.hpp"
#include "introspect/ood.hpp"
#include "introspect/rng.hpp"
#include "introspect/second_stage.hpp"
#include "introspect/train.hpp"
