#pragma once

#include "hsdecay/error.hpp"
#include "hsdecay/numerics.hpp"
#include "hsdecay/parallel.hpp"
#include "hsdecay/rational.hpp"
#include "hsdecay/lattice.hpp"
#include "hsdecay/lattice_io.hpp"
#include "hsdecay/spectrum.hpp"
#include "hsdecay/field.hpp"
#include "hsdecay/dft.hpp"
#include "hsdecay/bloch.hpp"
#include "hsdecay/profile.hpp"
#include "hsdecay/carleman.hpp"
#include "hsdecay/evolution.hpp"
#include "hsdecay/counterexample.hpp"
#include "hsdecay/svg.hpp"
#include "hsdecay/config.hpp"
#include "hsdecay/pipeline.hpp"
