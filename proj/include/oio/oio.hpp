#pragma once

#include "oio/common.hpp"
#include "oio/arm_model.hpp"
#include "oio/plume_env.hpp"
#include "oio/sensor_models.hpp"
#include "oio/bout_filter.hpp"
#include "oio/rig.hpp"
#include "oio/belief_map.hpp"
#include "oio/calibration.hpp"
#include "oio/ekf_fusion.hpp"
#include "oio/navigation.hpp"
#include "oio/sensor_response.hpp"
#include "oio/scenario.hpp"
#include "oio/runner.hpp"
