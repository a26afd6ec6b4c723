#pragma once

#include <rgem/bounds.hpp>
#include <rgem/distsim.hpp>
#include <rgem/gem.hpp>
#include <rgem/geometry.hpp>
#include <rgem/oracles.hpp>
#include <rgem/problems.hpp>
#include <rgem/reference.hpp>
#include <rgem/rgem.hpp>
#include <rgem/rng.hpp>
#include <rgem/trace.hpp>
#include <rgem/types.hpp>
