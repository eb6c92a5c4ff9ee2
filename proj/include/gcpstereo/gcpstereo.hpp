#pragma once

#include "gcpstereo/config.hpp"
#include "gcpstereo/cost.hpp"
#include "gcpstereo/error.hpp"
#include "gcpstereo/eval.hpp"
#include "gcpstereo/gcp.hpp"
#include "gcpstereo/image.hpp"
#include "gcpstereo/imageio.hpp"
#include "gcpstereo/net.hpp"
#include "gcpstereo/pipeline.hpp"
#include "gcpstereo/sgm.hpp"
#include "gcpstereo/synthetic.hpp"
