#pragma once

#include "marloc/breakdown.hpp"
#include "marloc/convolution.hpp"
#include "marloc/error.hpp"
#include "marloc/inference.hpp"
#include "marloc/io.hpp"
#include "marloc/kde.hpp"
#include "marloc/location.hpp"
#include "marloc/m_scale.hpp"
#include "marloc/model.hpp"
#include "marloc/pipeline.hpp"
#include "marloc/regression.hpp"
#include "marloc/rho.hpp"
#include "marloc/simulation.hpp"
