#pragma once

#include "channel.hpp"
#include "emitter.hpp"
#include "encoding.hpp"
#include "gates.hpp"
#include "gaussian.hpp"
#include "lattice.hpp"
#include "model.hpp"
#include "observables.hpp"
#include "parallel.hpp"
#include "runner.hpp"
#include "ssep.hpp"
#include "state_vector.hpp"
