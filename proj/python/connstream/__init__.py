"""Python access to the connstream engine."""

import json

from ._core import (
    DegenerateTrialCountError,
    Error,
    ParameterError,
    TrialCache as _TrialCache,
    decode_frames,
    design_fir,
    encode_frame,
    metric_names,
    normalized_xcorr,
    simulate,
)

FRAME_NETWORK = 0x01
FRAME_TIMING = 0x02
FRAME_ACK = 0x03
FRAME_CONTROL = 0x10


class TrialCache(_TrialCache):
    def finalize(self, metric, lo_bin, hi_bin):
        """Network over the active trials as a dict (wire JSON layout)."""
        return json.loads(self.finalize_json(metric, lo_bin, hi_bin))


def connectivity(epochs, metric, lo_bin, hi_bin, nfft=600, sfreq=600.0):
    """Batch network for an iterable of (channels, samples) arrays."""
    epochs = list(epochs)
    cache = TrialCache(epochs[0].shape[0], nfft=nfft, storage=False, sfreq=sfreq)
    for e in epochs:
        cache.add_trial(e)
    return cache.finalize(metric, lo_bin, hi_bin)


__all__ = [
    "DegenerateTrialCountError",
    "Error",
    "ParameterError",
    "TrialCache",
    "connectivity",
    "decode_frames",
    "design_fir",
    "encode_frame",
    "metric_names",
    "normalized_xcorr",
    "simulate",
    "FRAME_NETWORK",
    "FRAME_TIMING",
    "FRAME_ACK",
    "FRAME_CONTROL",
]
