// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "driverl/config.hpp"
#include "driverl/dataset.hpp"
#include "driverl/grpo.hpp"
#include "driverl/http_judge.hpp"
#include "driverl/judge.hpp"
#include "driverl/policy.hpp"
#include "driverl/reward.hpp"
#include "driverl/telemetry.hpp"
#include "driverl/types.hpp"
