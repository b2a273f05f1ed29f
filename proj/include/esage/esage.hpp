#pragma once

#include "esage/attacks.hpp"
#include "esage/dataset.hpp"
#include "esage/defense.hpp"
#include "esage/explainer.hpp"
#include "esage/graph.hpp"
#include "esage/harness.hpp"
#include "esage/matrix.hpp"
#include "esage/model.hpp"
#include "esage/rng.hpp"
