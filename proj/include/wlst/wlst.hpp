#pragma once

#include "wlst/box_codec.hpp"
#include "wlst/camera.hpp"
#include "wlst/config.hpp"
#include "wlst/errors.hpp"
#include "wlst/evaluation.hpp"
#include "wlst/frame.hpp"
#include "wlst/frustum_labeler.hpp"
#include "wlst/fusion.hpp"
#include "wlst/geometry.hpp"
#include "wlst/kitti_io.hpp"
#include "wlst/log.hpp"
#include "wlst/parallel.hpp"
#include "wlst/pseudo_label.hpp"
#include "wlst/rng.hpp"
#include "wlst/selftrain.hpp"
#include "wlst/simulate.hpp"
