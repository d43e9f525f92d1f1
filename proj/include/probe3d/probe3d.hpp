#pragma once

#include "probe3d/dataset.hpp"
#include "probe3d/dataset_io.hpp"
#include "probe3d/error.hpp"
#include "probe3d/feature_store.hpp"
#include "probe3d/mask.hpp"
#include "probe3d/metrics.hpp"
#include "probe3d/pooling.hpp"
#include "probe3d/random.hpp"
#include "probe3d/report.hpp"
#include "probe3d/search.hpp"
#include "probe3d/svm.hpp"
#include "probe3d/synth.hpp"
#include "probe3d/tensor_store.hpp"
