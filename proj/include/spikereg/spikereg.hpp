#pragma once

// Umbrella header.

#include "spikereg/errors.hpp"
#include "spikereg/linalg.hpp"
#include "spikereg/neuron.hpp"
#include "spikereg/codec.hpp"
#include "spikereg/network.hpp"
#include "spikereg/dataset.hpp"
#include "spikereg/training.hpp"
#include "spikereg/materials.hpp"
#include "spikereg/profiling.hpp"
#include "spikereg/io.hpp"
