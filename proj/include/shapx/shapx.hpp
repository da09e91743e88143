#pragma once

#include "shapx/distributions.hpp"
#include "shapx/empirical.hpp"
#include "shapx/error.hpp"
#include "shapx/expectation.hpp"
#include "shapx/gadgets.hpp"
#include "shapx/interpolation.hpp"
#include "shapx/io.hpp"
#include "shapx/model.hpp"
#include "shapx/parallel.hpp"
#include "shapx/rational.hpp"
#include "shapx/shap.hpp"
#include "shapx/treeshap_audit.hpp"
#include "shapx/value_function.hpp"
