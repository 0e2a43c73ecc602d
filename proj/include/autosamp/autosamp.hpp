#pragma once

#include "autosamp/acquisition.hpp"
#include "autosamp/analysis.hpp"
#include "autosamp/cnn.hpp"
#include "autosamp/container.hpp"
#include "autosamp/dataset.hpp"
#include "autosamp/grad.hpp"
#include "autosamp/metrics.hpp"
#include "autosamp/numerics.hpp"
#include "autosamp/nufft.hpp"
#include "autosamp/patterns.hpp"
#include "autosamp/recon.hpp"
#include "autosamp/trainer.hpp"
#include "autosamp/wavelet.hpp"
