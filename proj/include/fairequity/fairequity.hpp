#pragma once
#ifndef FAIREQUITY_FAIREQUITY_HPP
#define FAIREQUITY_FAIREQUITY_HPP

#include "fairequity/config.hpp"
#include "fairequity/data_fabric.hpp"
#include "fairequity/error.hpp"
#include "fairequity/fl_engine.hpp"
#include "fairequity/harness.hpp"
#include "fairequity/metrics.hpp"
#include "fairequity/outlier_guard.hpp"
#include "fairequity/random.hpp"
#include "fairequity/selector.hpp"

#endif  // FAIREQUITY_FAIREQUITY_HPP
