#pragma once

#include "sbka/codebook.hpp"
#include "sbka/config.hpp"
#include "sbka/dataset.hpp"
#include "sbka/encoder.hpp"
#include "sbka/errors.hpp"
#include "sbka/gmm.hpp"
#include "sbka/gradcheck.hpp"
#include "sbka/io.hpp"
#include "sbka/losses.hpp"
#include "sbka/metrics.hpp"
#include "sbka/numerics.hpp"
#include "sbka/parallel.hpp"
#include "sbka/pipeline.hpp"
#include "sbka/reports.hpp"
#include "sbka/trainer.hpp"
