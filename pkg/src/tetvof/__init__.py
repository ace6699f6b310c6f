"""Volume-conserving VOF liquid on a kinematically deforming tet mesh,
coupled to a background level-set grid solver and spray particles."""

import os

import numba

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"
if os.environ.get("TETVOF_THREADS"):
    numba.set_num_threads(min(int(os.environ["TETVOF_THREADS"]), numba.config.NUMBA_NUM_THREADS))

__version__ = "0.1.0"
