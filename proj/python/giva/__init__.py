"""Python surface for the adapter toolkit: SVD kernels, basis construction,
and run drivers backed by the C++ core."""

import json as _json

from ._giva import (
    GivaError,
    best_rank_r_error,
    giva_bases,
    objective_value,
    qr_orthonormal,
    svd_full,
    svd_lowrank,
    verify_run,
)
from ._giva import train_run as _train_run

__all__ = [
    "GivaError",
    "best_rank_r_error",
    "giva_bases",
    "objective_value",
    "qr_orthonormal",
    "svd_full",
    "svd_lowrank",
    "train_run",
    "verify_run",
]


def train_run(config, out_dir):
    """Run one training job. `config` is a dict or JSON string; returns the
    run summary as a dict."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _json.loads(_train_run(config, str(out_dir)))
