#pragma once

#include "stdesc/cell_index.hpp"
#include "stdesc/config.hpp"
#include "stdesc/descriptor.hpp"
#include "stdesc/descriptor_db.hpp"
#include "stdesc/error.hpp"
#include "stdesc/eval.hpp"
#include "stdesc/geometry.hpp"
#include "stdesc/ingest.hpp"
#include "stdesc/kdtree.hpp"
#include "stdesc/keypoints.hpp"
#include "stdesc/loop_detect.hpp"
#include "stdesc/pipeline.hpp"
#include "stdesc/plane_extraction.hpp"
