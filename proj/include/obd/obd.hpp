#pragma once

#include "obd/netlist.hpp"
#include "obd/xtor_net.hpp"
#include "obd/set_cover.hpp"
#include "obd/defects.hpp"
#include "obd/simulate.hpp"
#include "obd/atpg.hpp"
#include "obd/device.hpp"
#include "obd/progression.hpp"
#include "obd/units.hpp"
