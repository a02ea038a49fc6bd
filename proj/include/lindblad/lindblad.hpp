#ifndef LINDBLAD_LINDBLAD_HPP
#define LINDBLAD_LINDBLAD_HPP

#include "lindblad/errors.hpp"
#include "lindblad/linalg.hpp"
#include "lindblad/state.hpp"
#include "lindblad/model.hpp"
#include "lindblad/model_io.hpp"
#include "lindblad/frem.hpp"
#include "lindblad/lrem.hpp"
#include "lindblad/oracle.hpp"
#include "lindblad/harness.hpp"
#include "lindblad/properties.hpp"

#endif  // LINDBLAD_LINDBLAD_HPP
