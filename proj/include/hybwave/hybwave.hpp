#pragma once

#include "hybwave/core.hpp"
#include "hybwave/geometry.hpp"
#include "hybwave/fdm.hpp"
#include "hybwave/fem.hpp"
#include "hybwave/pulse.hpp"
#include "hybwave/coupling.hpp"
#include "hybwave/diagnostics.hpp"
#include "hybwave/inversion.hpp"
#include "hybwave/synthesis.hpp"
#include "hybwave/io.hpp"
#include "hybwave/config.hpp"
#include "hybwave/commands.hpp"
