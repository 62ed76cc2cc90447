#pragma once

#include "demreg/error.hpp"
#include "demreg/dem_io.hpp"
#include "demreg/segmentation.hpp"
#include "demreg/landmarks.hpp"
#include "demreg/graph_match.hpp"
#include "demreg/knowledge_base.hpp"
#include "demreg/metrics.hpp"
#include "demreg/register.hpp"
#include "demreg/fractal_codec.hpp"
#include "demreg/evaluation.hpp"
