#pragma once

#include "iatc/core.hpp"
#include "iatc/dataset.hpp"
#include "iatc/glm.hpp"
#include "iatc/metrics.hpp"
#include "iatc/noise_correction.hpp"
#include "iatc/numeric.hpp"
#include "iatc/power_transform.hpp"
#include "iatc/rng.hpp"
#include "iatc/simulator.hpp"
#include "iatc/transforms.hpp"
#include "iatc/transforms/rsa.hpp"
#include "iatc/pipeline/config.hpp"
#include "iatc/pipeline/evaluate.hpp"
#include "iatc/pipeline/parallel.hpp"
#include "iatc/pipeline/report.hpp"
