"""Stand-in for the 2D control-point regressor.

Predictions either come from a noisy oracle (ground truth plus isotropic
Gaussian pixel noise) or are loaded from a JSON Lines file written by an
external model, one ``{"sample_id", "points2d", "confidence"?}`` per line.
"""

from dataclasses import dataclass

import numpy as np

from ._io import read_jsonl, write_jsonl
from ._validation import check_points2d, check_random_state
from .exceptions import DataFormatError, PreconditionError

_PREDICT_STREAM = 2


@dataclass(frozen=True, eq=False)
class Prediction:
    sample_id: int
    points2d: np.ndarray
    confidence: float = None

    def __post_init__(self):
        pts = check_points2d(self.points2d).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points2d", pts)
        if self.confidence is not None:
            c = float(self.confidence)
            if not 0.0 <= c <= 1.0:
                raise PreconditionError(f"confidence must lie in [0, 1], got {c}")
            object.__setattr__(self, "confidence", c)


def oracle_predict(sample, noise_sigma_px, rng):
    """Ground-truth labels plus i.i.d. ``N(0, sigma^2)`` noise on every coordinate."""
    sigma = float(noise_sigma_px)
    if not sigma >= 0:
        raise PreconditionError(f"noise_sigma_px must be non-negative, got {noise_sigma_px!r}")
    rng = check_random_state(rng)
    noise = rng.standard_normal(sample.gt_points2d.shape)
    return Prediction(sample.id, sample.gt_points2d + sigma * noise)


def prediction_rng(seed, sample_id):
    return np.random.default_rng([int(seed), _PREDICT_STREAM, int(sample_id)])


def oracle_predict_dataset(samples, noise_sigma_px, seed):
    """Oracle predictions for every sample, each drawn from its own ``(seed, id)`` stream.

    Different ``noise_sigma_px`` values with the same seed reuse the same
    standard-normal draws, so a sigma sweep scales one fixed noise pattern.
    """
    return [oracle_predict(s, noise_sigma_px, prediction_rng(seed, s.id)) for s in samples]


def prediction_to_record(pred):
    rec = {"sample_id": int(pred.sample_id), "points2d": pred.points2d.tolist()}
    if pred.confidence is not None:
        rec["confidence"] = pred.confidence
    return rec


def save_predictions(predictions, path):
    write_jsonl(path, (prediction_to_record(p) for p in predictions))


def load_predictions(path):
    """Parse a prediction file; errors name the offending line."""
    out, seen = [], set()
    for lineno, rec in read_jsonl(path, DataFormatError):
        try:
            sid = rec["sample_id"]
            if not isinstance(sid, int) or isinstance(sid, bool):
                raise TypeError(f"sample_id must be an integer, got {sid!r}")
            pred = Prediction(sid, np.asarray(rec["points2d"], dtype=np.float64),
                              rec.get("confidence"))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise DataFormatError(f"bad prediction record: {exc}", line=lineno) from None
        if sid in seen:
            raise DataFormatError(f"duplicate sample_id {sid}", line=lineno)
        seen.add(sid)
        out.append(pred)
    return out
