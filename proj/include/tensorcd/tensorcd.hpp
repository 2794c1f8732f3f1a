#pragma once

#include "config.hpp"
#include "errors.hpp"
#include "graph_io.hpp"
#include "linalg.hpp"
#include "moments.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "postprocess.hpp"
#include "sparse_svd.hpp"
#include "stgd.hpp"
#include "synthgen.hpp"
#include "text_io.hpp"
#include "validation.hpp"
#include "whitening.hpp"
