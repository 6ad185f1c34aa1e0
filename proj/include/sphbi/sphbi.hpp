#pragma once

#include "sphbi/core.hpp"
#include "sphbi/pcap.hpp"
#include "sphbi/dissect.hpp"
#include "sphbi/byte_codec.hpp"
#include "sphbi/record.hpp"
#include "sphbi/labeling.hpp"
#include "sphbi/dataset.hpp"
#include "sphbi/nn/model.hpp"
#include "sphbi/nn/loss.hpp"
#include "sphbi/nn/optim.hpp"
#include "sphbi/nn/gradcheck.hpp"
#include "sphbi/models.hpp"
#include "sphbi/metrics.hpp"
#include "sphbi/stats.hpp"
#include "sphbi/experiments.hpp"
#include "sphbi/survey.hpp"
#include "sphbi/synth.hpp"
